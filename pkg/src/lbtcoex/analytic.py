"""Closed-form channel-access model for WiFi and Cat.4 LBT nodes.

Each node class is described by a per-slot transmit probability that depends
on the probability ``p_b`` of sensing the channel busy and ``p_f`` of a
failed transmission.  The busy probability in turn depends on how many other
nodes transmit, which closes the loop; :func:`solve_fixed_point` finds the
self-consistent operating point with a damped iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from .detection import DetectionParams, tail_busy, tail_idle, threshold_from_tnr_db

SINGULAR_EPS = 1e-9
DEGENERATE_DEN = 1e-300


class UplinkMode(str, Enum):
    SUL = "SUL"
    GUL = "GUL"


class DomainError(ValueError):
    """A formula evaluated to a value outside [0, 1]."""


class DegenerateDenominatorError(ArithmeticError):
    """Denominator vanished; ``inputs`` records the offending arguments."""

    def __init__(self, msg, inputs):
        super().__init__(f"{msg}: {inputs}")
        self.inputs = inputs


def _check_args(q, w0, m, p_b, p_f):
    for name, v in (("q", q), ("p_b", p_b), ("p_f", p_f)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
    if w0 < 1:
        raise ValueError(f"w0 must be >= 1, got {w0!r}")
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m!r}")


def _finish(num, den, check, inputs):
    if abs(den) < DEGENERATE_DEN:
        if num == 0.0:
            return 0.0
        raise DegenerateDenominatorError("vanishing denominator", inputs)
    val = num / den
    if check and not -1e-12 <= val <= 1.0 + 1e-12:
        raise DomainError(f"transmit probability {val!r} outside [0, 1] for {inputs}")
    return min(max(val, 0.0), 1.0) if check else val


def _geom(r, n):
    """sum_{i<n} r**i, the (1 - r**n)/(1 - r) that stays finite at r = 1."""
    return float(n) if r == 1.0 else sum(r**i for i in range(n))


def p_tx_wifi(q, w0, m, p_b, p_f, *, check=True):
    """Per-slot transmit probability of a WiFi DCF node.

    Uses the printed rational form; within ``SINGULAR_EPS`` of ``p_f = 1/2`` the
    common ``(1 - 2 p_f)`` factor is cancelled and the geometric sum is used.

    Args:
        q: packet arrival probability per slot.
        w0: initial contention window.
        m: maximum backoff stage.
        p_b: probability the channel is sensed busy.
        p_f: probability a transmission fails.
        check: raise :class:`DomainError` instead of returning a value outside
            [0, 1].
    """
    _check_args(q, w0, m, p_b, p_f)
    inputs = dict(q=q, w0=w0, m=m, p_b=p_b, p_f=p_f)
    if abs(1.0 - 2.0 * p_f) < SINGULAR_EPS:
        num = 2.0 * q * (1.0 - p_b)
        den = 2.0 * (1.0 - p_b) * (1.0 - p_f) + q * (
            w0 * p_f * _geom(2.0 * p_f, m) + (1.0 + w0 - 2.0 * p_b)
        )
        return _finish(num, den, check, inputs)
    num = 2.0 * q * (1.0 - p_b) * (1.0 - 2.0 * p_f)
    den = 2.0 * (1.0 - p_b) * (1.0 - p_f) * (1.0 - 2.0 * p_f) + q * (
        w0 * p_f * (1.0 - (2.0 * p_f) ** m) + (1.0 + w0 - 2.0 * p_b) * (1.0 - 2.0 * p_f)
    )
    return _finish(num, den, check, inputs)


def p_tx_cat4(q, w0, m, p_b, p_f, *, check=True):
    """Per-slot transmit probability of a Cat.4 LBT node, printed rational form.

    The printed numerator lacks the ``(1 - 2 p_f)`` factor its denominator
    carries, so the value has a pole at ``p_f = 1/2`` and turns negative beyond
    it.  ``check=True`` reports that as :class:`DomainError`; ``check=False``
    returns the raw value.  :func:`p_tx_cat4_chain` is the pole-free form the
    solver uses by default.
    """
    _check_args(q, w0, m, p_b, p_f)
    Q = 2.0 * (1.0 - p_b) * (1.0 - p_f) * (1.0 - 2.0 * p_f)
    P = p_b + p_f - p_b * p_f
    R = 1.0 - p_f ** (m + 1)
    num = 2.0 * q * (1.0 - p_b) * (1.0 - p_f) * R
    den = Q + q * (
        w0 * P * (1.0 - p_f) * (1.0 - (2.0 * p_f) ** (m + 1))
        + P * R * (1.0 - 2.0 * p_b) * (1.0 - 2.0 * p_f)
        + 2.0 * R * (1.0 - p_b) ** 2 * (1.0 - p_f) * (1.0 - 2.0 * p_f)
    )
    return _finish(num, den, check, dict(q=q, w0=w0, m=m, p_b=p_b, p_f=p_f))


def p_tx_cat4_chain(q, w0, m, p_b, p_f, *, check=True):
    """Cat.4 transmit probability from the explicit per-slot Markov chain.

    Chain: an idle node receives a packet w.p. ``q`` and senses once; idle
    means transmit in the next slot, busy means stage-0 backoff.  Stage ``i``
    counts ``U[0, w0 2^i)`` idle slots (frozen while busy) and then
    transmits.  A failure moves to stage ``i+1`` (an immediate attempt fails
    into stage 0) and failing at stage ``m`` drops the packet.

    Shares every denominator term with :func:`p_tx_cat4` and coincides with it
    when ``p_f = 0``, but the ``(1 - 2 p_f)`` factor is cancelled so the value
    is finite and in [0, 1] everywhere.
    """
    _check_args(q, w0, m, p_b, p_f)
    P = p_b + p_f - p_b * p_f
    R = 1.0 - p_f ** (m + 1)
    G = _geom(2.0 * p_f, m + 1)
    num = 2.0 * q * (1.0 - p_b) * ((1.0 - p_b) * (1.0 - p_f) + P * R)
    den = 2.0 * (1.0 - p_b) * (1.0 - p_f) + q * (
        w0 * P * (1.0 - p_f) * G
        + P * R * (1.0 - 2.0 * p_b)
        + 2.0 * (1.0 - p_b) ** 2 * (1.0 - p_f)
    )
    return _finish(num, den, check, dict(q=q, w0=w0, m=m, p_b=p_b, p_f=p_f))


CAT4_FORMS = {"chain": p_tx_cat4_chain, "printed": p_tx_cat4}


# ---------------------------------------------------------------------------
# busy probability
# ---------------------------------------------------------------------------

def detection_tails(n_max, det: Optional[DetectionParams], snr_per_tx, false_alarm=False):
    """Busy-verdict probability given ``n`` transmitters, for n = 0..n_max.

    ``det=None`` is ideal sensing: busy iff at least one transmitter.
    """
    if det is None:
        return [0.0] + [1.0] * n_max
    t0 = tail_idle(det.y_thv, det.mu) if false_alarm else 0.0
    out = [t0]
    for n in range(1, n_max + 1):
        out.append(tail_busy(det.y_thv, DetectionParams(det.mu, n * snr_per_tx, det.y_thv)))
    return out


def _binom_pmf(count, p):
    return [math.comb(count, k) * p**k * (1.0 - p) ** (count - k) for k in range(count + 1)]


def _convolve(a, b):
    out = [0.0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0.0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def busy_prob_mixture(others, tails, binomial="neighbors"):
    """Busy probability seen by one node given independent classes of others.

    Args:
        others: ``(count, p_tx)`` pairs for the nodes the observer can hear.
        tails: busy-verdict probability indexed by transmitter count.
        binomial: ``"neighbors"`` weights transmitter sets by the product of
            per-class binomials over the observed nodes; ``"literal"`` scales
            the weight of ``n`` transmitters by ``N/(N-n)`` with ``N`` the
            observed count plus one, which for a single class reproduces
            ``Binom(N, n) p^n (1-p)^(N-1-n)``.
    """
    dist = [1.0]
    for count, p in others:
        if count > 0:
            dist = _convolve(dist, _binom_pmf(count, p))
    if binomial == "literal":
        n_all = len(dist)  # observed + 1
        dist = [w * n_all / (n_all - n) for n, w in enumerate(dist)]
    elif binomial != "neighbors":
        raise ValueError(f"unknown binomial mode {binomial!r}")
    total = sum(w * tails[n] for n, w in enumerate(dist))
    return min(total, 1.0)


def busy_prob(p_tx, n_total, det: Optional[DetectionParams], snr_per_tx=10.0, *,
              binomial="neighbors", false_alarm=False):
    """Busy probability in a homogeneous network of ``n_total`` nodes.

    Sums over ``n`` of the other ``n_total - 1`` nodes transmitting, weighted
    by the probability that ``n`` transmitters trip the detector.
    """
    if not 0.0 <= p_tx <= 1.0:
        raise ValueError(f"p_tx must lie in [0, 1], got {p_tx!r}")
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    tails = detection_tails(n_total - 1, det, snr_per_tx, false_alarm)
    return busy_prob_mixture([(n_total - 1, p_tx)], tails, binomial)


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------

def default_detection(mu=1, tnr_db=5.0) -> DetectionParams:
    return DetectionParams(mu=mu, gamma=0.0, y_thv=threshold_from_tnr_db(tnr_db, mu))


@dataclass(frozen=True)
class ModelParams:
    """Inputs of the analytic model.

    ``detection=None`` selects ideal sensing.  Under ``SUL`` the Cat.4 class is
    the eNBs; under ``GUL`` UEs contend with the same Cat.4 procedure, so the
    class grows to ``n_enb + n_ue``.
    """

    q: float = 1.0
    m: int = 4
    w0: int = 16
    n_wifi: int = 5
    n_enb: int = 5
    n_ue: int = 5
    snr_per_tx: float = 10.0
    detection: Optional[DetectionParams] = field(default_factory=default_detection)
    uplink_mode: UplinkMode = UplinkMode.SUL
    cat4_form: str = "chain"
    binomial: str = "neighbors"
    false_alarm: bool = False
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    p_b0: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q!r}")
        if self.w0 < 2 or self.m < 0:
            raise ValueError("need w0 >= 2 and m >= 0")
        if min(self.n_wifi, self.n_enb, self.n_ue) < 0:
            raise ValueError("node counts must be >= 0")
        object.__setattr__(self, "uplink_mode", UplinkMode(self.uplink_mode))
        if self.n_wifi + self.n_cat4 < 1:
            raise ValueError("at least one contending node is required")
        if not self.snr_per_tx > 0:
            raise ValueError("snr_per_tx must be > 0")
        if self.cat4_form not in CAT4_FORMS:
            raise ValueError(f"cat4_form must be one of {sorted(CAT4_FORMS)}")
        if self.binomial not in ("neighbors", "literal"):
            raise ValueError("binomial must be 'neighbors' or 'literal'")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")

    @property
    def n_cat4(self) -> int:
        if self.uplink_mode is UplinkMode.GUL:
            return self.n_enb + self.n_ue
        return self.n_enb

    @property
    def n_total(self) -> int:
        return self.n_wifi + self.n_cat4


@dataclass(frozen=True)
class FixedPointSolution:
    """Self-consistent operating point.

    ``p_b`` and ``p_f`` are the Cat.4 class's view (equal by construction);
    ``p_b_wifi`` is what a WiFi node sees.  ``residual`` is the largest
    ``|busy(p_tx(p_b)) - p_b|`` over classes at the returned point.
    """

    p_tx_wifi: float
    p_tx_cat4: float
    p_b: float
    p_f: float
    p_b_wifi: float
    residual: float
    iterations: int
    converged: bool


def _busy_map(params: ModelParams, tails, pb_w, pb_c):
    """One evaluation of the coupled map; returns (p_w, p_c, new_pb_w, new_pb_c)."""
    cat4 = CAT4_FORMS[params.cat4_form]
    q, w0, m = params.q, params.w0, params.m
    p_w = p_tx_wifi(q, w0, m, pb_w, pb_w)
    p_c = cat4(q, w0, m, pb_c, pb_c)
    nw, nc = params.n_wifi, params.n_cat4
    new_w = busy_prob_mixture([(max(nw - 1, 0), p_w), (nc, p_c)], tails, params.binomial)
    new_c = busy_prob_mixture([(nw, p_w), (max(nc - 1, 0), p_c)], tails, params.binomial)
    return p_w, p_c, new_w, new_c


def solve_fixed_point(params: ModelParams) -> FixedPointSolution:
    """Damped fixed-point iteration on the per-class busy probabilities.

    Starts from ``p_b = params.p_b0`` for every class and stops once the
    undamped map moves no class by more than ``params.tol``.  A non-converged
    or out-of-domain run returns ``converged=False`` with the last iterate.
    """
    tails = detection_tails(params.n_total, params.detection, params.snr_per_tx,
                            params.false_alarm)
    a = params.damping
    pb_w = pb_c = params.p_b0
    p_w = p_c = float("nan")
    residual = float("inf")
    it = 0
    try:
        for it in range(1, params.max_iter + 1):
            p_w, p_c, new_w, new_c = _busy_map(params, tails, pb_w, pb_c)
            residual = max(abs(new_w - pb_w), abs(new_c - pb_c))
            if residual < params.tol:
                # finish on the undamped image so exact fixed points (q=0) land exactly
                pb_w, pb_c = new_w, new_c
                p_w, p_c, new_w, new_c = _busy_map(params, tails, pb_w, pb_c)
                residual = max(abs(new_w - pb_w), abs(new_c - pb_c))
                break
            pb_w = (1.0 - a) * pb_w + a * new_w
            pb_c = (1.0 - a) * pb_c + a * new_c
        converged = residual < params.tol
    except (DomainError, DegenerateDenominatorError):
        converged = False
    return FixedPointSolution(p_tx_wifi=p_w, p_tx_cat4=p_c, p_b=pb_c, p_f=pb_c,
                              p_b_wifi=pb_w, residual=residual, iterations=it,
                              converged=converged)


def access_prob_sul(sol: FixedPointSolution) -> float:
    """Scheduled-uplink access: eNB wins Cat.4, then the UE's single CCA must be idle."""
    if not sol.converged:
        raise ValueError("access probability needs a converged solution")
    return (1.0 - sol.p_b) * sol.p_tx_cat4


def access_prob_gul(params: ModelParams) -> float:
    """Grant-less access: the UE's own Cat.4 transmit probability with UEs contending."""
    if params.uplink_mode is not UplinkMode.GUL:
        raise ValueError("access_prob_gul needs uplink_mode=GUL")
    sol = solve_fixed_point(params)
    if not sol.converged:
        raise ValueError(f"fixed point did not converge (residual {sol.residual:.3g})")
    return sol.p_tx_cat4


@dataclass(frozen=True)
class SweepRow:
    q: float
    p_tx_wifi: float
    p_tx_cat4: float
    access_sul: float
    access_gul: float
    p_b: float
    converged: bool
    p_tx_wifi_gul: float = float("nan")
    residual: float = float("nan")


SWEEP_COLUMNS = ("q", "p_tx_wifi", "p_tx_cat4", "access_sul", "access_gul", "p_b", "converged")


def sweep(params: ModelParams, q_grid: Sequence[float]) -> list[SweepRow]:
    """Solve the SUL and GUL populations at every ``q``; one row per point.

    ``p_tx_wifi``, ``p_tx_cat4`` and ``p_b`` are from the SUL population;
    ``p_tx_wifi_gul`` is the WiFi value once UEs contend.  A row that fails to
    converge carries NaN access values and ``converged=False``.
    """
    grid = [float(q) for q in q_grid]
    if not grid:
        raise ValueError("q_grid must be non-empty")
    if any(not 0.0 <= q <= 1.0 for q in grid):
        raise ValueError("q_grid values must lie in [0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("q_grid must be strictly increasing")
    rows = []
    for q in grid:
        sul = solve_fixed_point(replace(params, q=q, uplink_mode=UplinkMode.SUL))
        gul = solve_fixed_point(replace(params, q=q, uplink_mode=UplinkMode.GUL))
        ok = sul.converged and gul.converged
        nan = float("nan")
        rows.append(SweepRow(
            q=q,
            p_tx_wifi=sul.p_tx_wifi,
            p_tx_cat4=sul.p_tx_cat4,
            access_sul=access_prob_sul(sul) if sul.converged else nan,
            access_gul=gul.p_tx_cat4 if gul.converged else nan,
            p_b=sul.p_b,
            converged=ok,
            p_tx_wifi_gul=gul.p_tx_wifi,
            residual=max(sul.residual, gul.residual),
        ))
    return rows
