"""Energy-detection numerics against scipy distributions and quadrature."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from lbtcoex.detection import (
    DetectionParams,
    EnergyDetector,
    log_bessel_i,
    marcum_q,
    pdf_busy,
    pdf_idle,
    tail_busy,
    tail_idle,
    threshold_from_tnr_db,
)

MUS = (1, 2, 4, 8)
GAMMAS = (0.1, 1.0, 10.0, 50.0)


def _p(mu, gamma, y=0.0):
    return DetectionParams(mu=mu, gamma=gamma, y_thv=y)


# -- point values -----------------------------------------------------------

def test_pdf_idle_points():
    assert pdf_idle(0.0, 1) == 0.5
    assert pdf_idle(2.0, 1) == pytest.approx(math.exp(-1) / 2, rel=1e-14)


def test_pdf_busy_points():
    assert pdf_busy(0.0, _p(1, 5.0)) == pytest.approx(math.exp(-5) / 2, rel=1e-14)
    v = pdf_busy(1e-12, _p(3, 1.0))
    assert 0.0 <= v < 1e-20 and not math.isnan(v)


def test_tail_points():
    assert tail_idle(0.0, 4) == 1.0
    assert tail_idle(2.0, 1) == pytest.approx(math.exp(-1), rel=1e-14)
    assert tail_idle(1e4, 2) < 1e-12
    assert tail_idle(math.inf, 2) == 0.0
    assert tail_busy(0.0, _p(1, 10.0)) == 1.0
    assert tail_busy(4.0, _p(1, 1e-12)) == pytest.approx(math.exp(-2), rel=1e-9)


def test_threshold_mapping():
    assert threshold_from_tnr_db(0.0, 1) == 2.0
    assert threshold_from_tnr_db(10.0, 3) == pytest.approx(60.0)


# -- scipy oracles ------------------------------------------------------------

@pytest.mark.parametrize("mu", MUS)
@pytest.mark.parametrize("gamma", GAMMAS)
def test_pdf_busy_matches_ncx2(mu, gamma):
    for y in (0.3, 2.0, 15.0, 80.0, 200.0):
        ref = stats.ncx2.pdf(y, 2 * mu, 2 * gamma)
        assert pdf_busy(y, _p(mu, gamma)) == pytest.approx(ref, rel=1e-9, abs=1e-300)


@pytest.mark.parametrize("mu", MUS)
def test_pdf_idle_matches_chi2(mu):
    for y in (0.1, 1.0, 7.5, 40.0):
        assert pdf_idle(y, mu) == pytest.approx(stats.chi2.pdf(y, 2 * mu), rel=1e-12)


@pytest.mark.parametrize("mu", MUS)
@pytest.mark.parametrize("gamma", GAMMAS)
def test_tail_busy_matches_ncx2_sf(mu, gamma):
    for t in (0.5, 5.0, 20.0, 60.0, 150.0):
        ref = stats.ncx2.sf(t, 2 * mu, 2 * gamma)
        assert tail_busy(t, _p(mu, gamma)) == pytest.approx(ref, rel=1e-8, abs=1e-14)


def test_tail_busy_against_quadrature_single_point():
    p = _p(1, 10.0)
    ref, _ = integrate.quad(lambda y: pdf_busy(y, p), 20.0, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert abs(tail_busy(20.0, p) - ref) < 1e-8


def test_log_bessel_matches_scipy():
    for order in (0, 1, 3, 7):
        for x in (1e-3, 0.5, 4.0, 30.0, 300.0):
            ref = math.log(special.ive(order, x)) + x
            assert log_bessel_i(order, x) == pytest.approx(ref, rel=1e-12)


def test_marcum_large_argument_stable():
    # gamma well above the model's range still sums without overflow
    v = marcum_q(2, math.sqrt(2 * 400.0), math.sqrt(900.0))
    assert v == pytest.approx(stats.ncx2.sf(900.0, 4, 800.0), rel=1e-8)


# -- properties ---------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(
    mu=st.integers(1, 8),
    gamma=st.floats(1e-3, 100.0),
    t=st.floats(0.0, 400.0),
)
def test_ranges(mu, gamma, t):
    p = _p(mu, gamma)
    assert 0.0 <= tail_busy(t, p) <= 1.0
    assert 0.0 <= tail_idle(t, mu) <= 1.0
    assert pdf_busy(t, p) >= 0.0
    assert pdf_idle(t, mu) >= 0.0


@pytest.mark.parametrize("mu", MUS)
def test_tail_busy_monotone(mu):
    ts = np.linspace(0.5, 60.0, 25)
    gs = (0.1, 1.0, 3.0, 10.0, 50.0)
    grid = np.array([[tail_busy(t, _p(mu, g)) for t in ts] for g in gs])
    # strictly where the values are distinguishable from 0 and 1
    inner = (grid > 1e-12) & (grid < 1 - 1e-12)
    assert np.all(np.diff(grid, axis=1)[inner[:, 1:]] < 0)
    assert np.all(np.diff(grid, axis=0)[inner[1:, :]] > 0)


@pytest.mark.parametrize("mu", MUS)
def test_busy_tail_tends_to_idle(mu):
    for t in (0.5, 3.0, 12.0):
        assert abs(tail_busy(t, _p(mu, 1e-8)) - tail_idle(t, mu)) < 1e-6


# -- domain errors --------------------------------------------------------------

def test_domain_errors():
    with pytest.raises(ValueError):
        pdf_idle(-1.0, 1)
    with pytest.raises(ValueError):
        pdf_idle(1.0, 0)
    with pytest.raises(ValueError):
        pdf_busy(1.0, _p(1, 0.0))
    with pytest.raises(ValueError):
        tail_busy(-0.1, _p(1, 1.0))
    with pytest.raises(ValueError):
        tail_idle(-0.1, 1)
    with pytest.raises(ValueError):
        DetectionParams(mu=0)
    with pytest.raises(ValueError):
        DetectionParams(gamma=-1.0)
    with pytest.raises(ValueError):
        DetectionParams(mu=1.5)


def test_energy_detector():
    det = EnergyDetector(mu=1, tnr_db=5.0, snr_per_tx=10.0)
    y = threshold_from_tnr_db(5.0, 1)
    assert det.false_alarm() == pytest.approx(math.exp(-y / 2))
    assert det.detect_prob(2) == pytest.approx(stats.ncx2.sf(y, 2, 40.0), rel=1e-9)
    assert det.detect_prob(1) < det.detect_prob(3)
    with pytest.raises(ValueError):
        det.detect_prob(0)
