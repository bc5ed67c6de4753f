import math
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from chains import cat4_chain_rate, wifi_chain_rate
from transcriptions import cat4_ref, wifi_ref
from lbtcoex.analytic import (
    DegenerateDenominatorError,
    DomainError,
    FixedPointSolution,
    ModelParams,
    UplinkMode,
    access_prob_gul,
    access_prob_sul,
    busy_prob,
    busy_prob_mixture,
    default_detection,
    p_tx_cat4,
    p_tx_cat4_chain,
    p_tx_wifi,
    solve_fixed_point,
    sweep,
)
from lbtcoex.detection import DetectionParams, threshold_from_tnr_db

Q_GRID = [round(0.05 * i, 2) for i in range(1, 21)]
probs = st.floats(0.0, 1.0)


# -- transmit probability formulas ------------------------------------------

def test_wifi_examples():
    assert p_tx_wifi(0.0, 16, 4, 0.3, 0.2) == 0.0
    assert p_tx_wifi(1.0, 16, 4, 0.0, 0.0) == pytest.approx(2 / 19, rel=1e-15)


def test_wifi_half_failure_uses_limit():
    # the printed form is 0/0 here; the cancelled form is continuous across it
    at = p_tx_wifi(1.0, 16, 4, 0.0, 0.5)
    near = p_tx_wifi(1.0, 16, 4, 0.0, 0.5 + 1e-6)
    assert at == pytest.approx(0.04, rel=1e-12)
    assert at == pytest.approx(near, rel=1e-4)


def test_cat4_examples():
    assert p_tx_cat4(0.0, 16, 4, 0.2, 0.2) == 0.0
    assert p_tx_cat4(1.0, 16, 4, 0.0, 0.0) == pytest.approx(0.5, rel=1e-15)
    v = p_tx_cat4(0.5, 16, 4, 0.2, 0.2)
    assert 0.0 < v < 1.0
    assert v == pytest.approx(cat4_ref(0.5, 16, 4, 0.2, 0.2), rel=1e-13)


def test_printed_cat4_pole():
    with pytest.raises(DegenerateDenominatorError):
        p_tx_cat4(1.0, 16, 4, 0.3, 0.5)
    with pytest.raises(DomainError):
        p_tx_cat4(1.0, 16, 4, 0.3, 0.6)
    assert p_tx_cat4(1.0, 16, 4, 0.3, 0.6, check=False) < 0


@settings(max_examples=300, deadline=None)
@given(q=probs, w0=st.integers(2, 64), m=st.integers(0, 6), pb=probs, pf=probs)
def test_transcriptions_agree(q, w0, m, pb, pf):
    if abs(1 - 2 * pf) > 1e-6:
        a = p_tx_wifi(q, w0, m, pb, pf, check=False)
        b = wifi_ref(q, w0, m, pb, pf)
        assert a == pytest.approx(b, rel=1e-11, abs=1e-12)
    try:
        b = cat4_ref(q, w0, m, pb, pf)
    except ZeroDivisionError:
        return
    if abs(b) < 1e6:
        assert p_tx_cat4(q, w0, m, pb, pf, check=False) == pytest.approx(b, rel=1e-11, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_closed_forms_match_markov_chains(seed):
    r = random.Random(seed)
    for _ in range(5):
        q, pb, pf = r.random(), 0.9 * r.random(), 0.9 * r.random()
        w0, m = r.choice([2, 4, 8, 16]), r.randint(0, 4)
        assert p_tx_wifi(q, w0, m, pb, pf) == pytest.approx(wifi_chain_rate(q, w0, m, pb, pf), abs=1e-12)
        assert p_tx_cat4_chain(q, w0, m, pb, pf) == pytest.approx(cat4_chain_rate(q, w0, m, pb, pf), abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(q=probs, w0=st.integers(2, 64), m=st.integers(0, 6), pb=probs, pf=st.floats(0.0, 0.99))
def test_chain_form_in_unit_interval(q, w0, m, pb, pf):
    v = p_tx_cat4_chain(q, w0, m, pb, pf)
    assert 0.0 <= v <= 1.0
    if pb < 1.0:
        assert 0.0 <= p_tx_wifi(q, w0, m, pb, pf) <= 1.0


@settings(max_examples=100, deadline=None)
@given(q=probs, pb=st.floats(0.0, 0.99), w0=st.integers(2, 64), m=st.integers(0, 6))
def test_chain_equals_printed_without_failures(q, pb, w0, m):
    a = p_tx_cat4_chain(q, w0, m, pb, 0.0)
    assert a == pytest.approx(p_tx_cat4(q, w0, m, pb, 0.0), rel=1e-12, abs=1e-15)


def test_formula_domain_checks():
    with pytest.raises(ValueError):
        p_tx_wifi(1.2, 16, 4, 0.1, 0.1)
    with pytest.raises(ValueError):
        p_tx_cat4_chain(0.5, 16, -1, 0.1, 0.1)


# -- busy probability --------------------------------------------------------

def test_busy_prob_examples():
    det = default_detection()
    assert busy_prob(0.7, 1, det) == 0.0
    assert busy_prob(0.0, 5, det) == 0.0
    easy = DetectionParams(mu=1, y_thv=threshold_from_tnr_db(-10.0, 1))
    assert busy_prob(1.0, 5, easy, 10.0) == pytest.approx(1.0, abs=1e-6)


def test_busy_prob_ideal_is_any_transmitter():
    for n in (2, 3, 7):
        for p in (0.01, 0.3, 0.9):
            assert busy_prob(p, n, None) == pytest.approx(1 - (1 - p) ** (n - 1), rel=1e-13)


def test_busy_prob_literal_coefficient():
    p, n = 0.2, 5
    tails = [0.0, 0.5, 0.7, 0.9, 1.0]
    lit = busy_prob_mixture([(n - 1, p)], tails, "literal")
    ref = sum(math.comb(n, k) * p**k * (1 - p) ** (n - 1 - k) * tails[k] for k in range(1, n))
    assert lit == pytest.approx(ref, rel=1e-13)


def test_mixture_reduces_to_single_class():
    tails = [0.0, 0.4, 0.8, 0.95, 1.0, 1.0, 1.0]
    a = busy_prob_mixture([(2, 0.3), (4, 0.3)], tails)
    b = busy_prob_mixture([(6, 0.3)], tails)
    assert a == pytest.approx(b, rel=1e-13)


def test_false_alarm_term():
    det = default_detection()
    off = busy_prob(0.0, 5, det, false_alarm=False)
    on = busy_prob(0.0, 5, det, false_alarm=True)
    assert off == 0.0
    assert on == pytest.approx(math.exp(-det.y_thv / 2), rel=1e-12)


# -- fixed point -------------------------------------------------------------

def test_two_wifi_ideal_self_consistent():
    p = ModelParams(q=1.0, n_wifi=2, n_enb=0, n_ue=0, detection=None)
    sol = solve_fixed_point(p)
    assert sol.converged and sol.residual < 1e-9
    assert sol.p_b_wifi == pytest.approx(1 - (1 - sol.p_tx_wifi), abs=1e-9)


def test_default_sweep_converges_everywhere():
    for q in Q_GRID:
        for mode in UplinkMode:
            sol = solve_fixed_point(ModelParams(q=q, uplink_mode=mode))
            assert sol.converged and sol.residual < 1e-9


def test_reinsertion_reproduces_p_b():
    params = ModelParams(q=0.6)
    sol = solve_fixed_point(params)
    again = busy_prob_mixture(
        [(params.n_wifi, sol.p_tx_wifi), (params.n_cat4 - 1, sol.p_tx_cat4)],
        [0.0] + [busy_prob(1.0, n + 1, params.detection, params.snr_per_tx) for n in range(1, params.n_total + 1)],
    )
    assert again == pytest.approx(sol.p_b, abs=1e-9)


def test_solver_deterministic():
    assert solve_fixed_point(ModelParams(q=0.35)) == solve_fixed_point(ModelParams(q=0.35))


def test_printed_form_reports_failure_instead_of_raising():
    sol = solve_fixed_point(ModelParams(q=1.0, cat4_form="printed", detection=None, max_iter=500))
    assert isinstance(sol, FixedPointSolution)
    assert not sol.converged


def test_threshold_monotonicity():
    pbs = []
    for tnr in (0.0, 3.0, 6.0, 9.0, 12.0):
        det = DetectionParams(mu=1, y_thv=threshold_from_tnr_db(tnr, 1))
        pbs.append(solve_fixed_point(ModelParams(q=0.8, detection=det)).p_b)
    assert all(b <= a + 1e-12 for a, b in zip(pbs, pbs[1:]))


def test_q_zero():
    sol = solve_fixed_point(ModelParams(q=0.0))
    assert sol.converged
    assert sol.p_tx_cat4 == 0.0 and sol.p_b == 0.0


# -- access probabilities ------------------------------------------------------

def _sol(p_b, p_tx=0.2):
    return FixedPointSolution(0.1, p_tx, p_b, p_b, p_b, 0.0, 1, True)


def test_access_sul_examples():
    assert access_prob_sul(_sol(0.0)) == 0.2
    assert access_prob_sul(_sol(1.0)) == 0.0
    sol = solve_fixed_point(ModelParams(q=1.0))
    assert access_prob_sul(sol) < sol.p_tx_cat4
    with pytest.raises(ValueError):
        access_prob_sul(replace(sol, converged=False))


def test_access_gul_examples():
    p = ModelParams(q=0.7, n_ue=0, uplink_mode=UplinkMode.GUL)
    enb = solve_fixed_point(replace(p, uplink_mode=UplinkMode.SUL)).p_tx_cat4
    assert access_prob_gul(p) == pytest.approx(enb, rel=1e-12)
    assert access_prob_gul(replace(p, q=0.0)) == 0.0
    with pytest.raises(ValueError):
        access_prob_gul(replace(p, uplink_mode=UplinkMode.SUL))


def test_gul_access_dominates():
    for row in sweep(ModelParams(), Q_GRID):
        assert row.access_gul > row.access_sul


# -- sweep ---------------------------------------------------------------------

def test_sweep_zero_grid():
    (row,) = sweep(ModelParams(), [0.0])
    assert row.access_sul == 0.0 and row.access_gul == 0.0 and row.p_tx_wifi == 0.0


def test_sweep_matches_solver():
    p = ModelParams(n_wifi=4, n_enb=0, n_ue=0, q=1.0)
    (row,) = sweep(p, [1.0])
    sol = solve_fixed_point(p)
    assert row.p_tx_wifi == sol.p_tx_wifi and row.p_b == sol.p_b


def test_sweep_p_b_monotone():
    rows = sweep(ModelParams(), Q_GRID)
    assert all(r.converged for r in rows)
    assert all(b.p_b >= a.p_b - 1e-12 for a, b in zip(rows, rows[1:]))


def test_sweep_records_nonconvergence():
    rows = sweep(ModelParams(cat4_form="printed", detection=None, max_iter=200), [0.5, 1.0])
    assert len(rows) == 2
    assert not rows[-1].converged and math.isnan(rows[-1].access_sul)


@pytest.mark.parametrize("grid", [[], [0.5, 0.5], [0.6, 0.2], [1.2]])
def test_sweep_grid_validation(grid):
    with pytest.raises(ValueError):
        sweep(ModelParams(), grid)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(q=1.5)
    with pytest.raises(ValueError):
        ModelParams(n_wifi=0, n_enb=0, n_ue=3)
    with pytest.raises(ValueError):
        ModelParams(w0=1)
    assert ModelParams(uplink_mode="GUL").n_cat4 == 10


@settings(max_examples=60, deadline=None)
@given(
    q=probs,
    n_wifi=st.integers(0, 6),
    n_enb=st.integers(0, 6),
    n_ue=st.integers(0, 6),
    tnr=st.floats(-5.0, 15.0),
    mode=st.sampled_from(list(UplinkMode)),
)
def test_solution_probabilities_in_range(q, n_wifi, n_enb, n_ue, tnr, mode):
    if n_wifi + n_enb + (n_ue if mode is UplinkMode.GUL else 0) == 0:
        return
    det = DetectionParams(mu=1, y_thv=threshold_from_tnr_db(tnr, 1))
    sol = solve_fixed_point(ModelParams(q=q, n_wifi=n_wifi, n_enb=n_enb, n_ue=n_ue,
                                        detection=det, uplink_mode=mode))
    assert sol.converged
    for v in (sol.p_tx_wifi, sol.p_tx_cat4, sol.p_b, sol.p_f, sol.p_b_wifi):
        assert 0.0 <= v <= 1.0
    assert access_prob_sul(sol) <= sol.p_tx_cat4
