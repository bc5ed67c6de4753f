"""Energy-detection statistics for clear channel assessment.

The detector integrates ``mu`` complex samples normalized by the noise power,
so an idle channel yields a central chi-square statistic with ``2*mu``
degrees of freedom.  With ``n`` simultaneous transmitters of equal received
power the statistic becomes non-central chi-square with non-centrality
``2*gamma`` where ``gamma = n * P0rx / Pnoise``.

All functions are pure and restricted to integer ``mu``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

# relative truncation for every series in this module
SERIES_RTOL = 1e-15
_MAX_TERMS = 200_000


@dataclass(frozen=True)
class DetectionParams:
    """Detector shape ``mu``, aggregate SNR ``gamma`` and threshold ``y_thv``.

    ``y_thv`` lives in the normalized energy domain (idle statistic is
    chi-square with ``2*mu`` degrees of freedom).
    """

    mu: int = 1
    gamma: float = 0.0
    y_thv: float = 0.0

    def __post_init__(self):
        _check_mu(self.mu)
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if not self.y_thv >= 0:
            raise ValueError(f"y_thv must be >= 0, got {self.y_thv!r}")


def _check_mu(mu):
    if isinstance(mu, bool) or not isinstance(mu, int) or mu < 1:
        raise ValueError(f"mu must be a positive integer, got {mu!r}")


def _check_nonneg(name, value):
    if not value >= 0:  # also rejects NaN
        raise ValueError(f"{name} must be >= 0, got {value!r}")


def threshold_from_tnr_db(tnr_db: float, mu: int = 1) -> float:
    """Map a threshold-to-noise ratio in dB to the normalized energy domain.

    The idle statistic has mean ``2*mu``, so a threshold sitting ``tnr_db``
    above the noise floor maps to ``2*mu*10**(tnr_db/10)``.
    """
    _check_mu(mu)
    return 2.0 * mu * 10.0 ** (tnr_db / 10.0)


def _log_add(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a > b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def pdf_idle(y: float, mu: int) -> float:
    """Central chi-square density with ``2*mu`` degrees of freedom."""
    _check_nonneg("y", y)
    _check_mu(mu)
    if y == 0.0:
        return 0.5 if mu == 1 else 0.0
    log_pdf = (mu - 1) * math.log(y) - 0.5 * y - mu * math.log(2.0) - math.lgamma(mu)
    return math.exp(log_pdf)


def _log_bessel_series(z: float, order: int) -> float:
    """log of sum_k z**k / (k! (k+order)!), the scaled power series of I_order.

    ``I_v(x) = (x/2)**v * S(x**2/4)`` with ``S`` this series.  Summation starts
    at the dominant term and walks outward so that nothing overflows.
    """
    if z == 0.0:
        return -math.lgamma(order + 1)
    log_z = math.log(z)

    def log_term(k):
        return k * log_z - math.lgamma(k + 1) - math.lgamma(k + order + 1)

    # ratio t[k+1]/t[k] = z / ((k+1)(k+order+1)) drops below one past k_peak
    k_peak = max(0, int(0.5 * (-(order + 2) + math.sqrt(order * order + 4 * z))) + 1)
    peak = log_term(k_peak)
    total = 1.0
    k = k_peak + 1
    while k - k_peak < _MAX_TERMS:
        rel = math.exp(log_term(k) - peak)
        total += rel
        if rel < SERIES_RTOL * total:
            break
        k += 1
    k = k_peak - 1
    while k >= 0:
        rel = math.exp(log_term(k) - peak)
        total += rel
        if rel < SERIES_RTOL * total:
            break
        k -= 1
    return peak + math.log(total)


def log_bessel_i(order: int, x: float) -> float:
    """log I_order(x) for integer order >= 0 and x >= 0."""
    if order < 0:
        raise ValueError("order must be >= 0")
    _check_nonneg("x", x)
    if x == 0.0:
        return 0.0 if order == 0 else -math.inf
    return order * math.log(0.5 * x) + _log_bessel_series(0.25 * x * x, order)


def pdf_busy(y: float, p: DetectionParams) -> float:
    """Non-central chi-square density of the energy statistic when busy.

    Evaluates ``0.5 * (y/(2g))**((mu-1)/2) * exp(-(2g+y)/2) * I_{mu-1}(sqrt(2gy))``
    in log space.  Folding the Bessel prefactor into the power term gives
    ``0.5 * exp(-g - y/2) * (y/2)**(mu-1) * S(g*y/2)``, which is finite at y=0.
    """
    _check_nonneg("y", y)
    if not p.gamma > 0:
        raise ValueError("busy density needs gamma > 0; route n=0 to pdf_idle")
    order = p.mu - 1
    if y == 0.0:
        return 0.5 * math.exp(-p.gamma) if order == 0 else 0.0
    log_pdf = (
        math.log(0.5)
        - p.gamma
        - 0.5 * y
        + order * math.log(0.5 * y)
        + _log_bessel_series(0.5 * p.gamma * y, order)
    )
    return math.exp(log_pdf)


def _log_upper_gamma_reg(n: int, x: float) -> float:
    """log Q(n, x) for integer n >= 1: log(exp(-x) * sum_{k<n} x**k/k!)."""
    if x == 0.0:
        return 0.0
    log_x = math.log(x)
    acc = -math.inf
    for k in range(n):
        acc = _log_add(acc, k * log_x - math.lgamma(k + 1))
    return acc - x


def tail_idle(t: float, mu: int) -> float:
    """P(Y > t) on an idle channel: regularized upper incomplete gamma Q(mu, t/2)."""
    _check_nonneg("t", t)
    _check_mu(mu)
    if math.isinf(t):
        return 0.0
    return min(1.0, math.exp(_log_upper_gamma_reg(mu, 0.5 * t)))


def marcum_q(mu: int, a: float, b: float) -> float:
    """Generalized Marcum Q function Q_mu(a, b) for integer mu.

    Poisson mixture of regularized upper incomplete gammas::

        Q_mu(a, b) = sum_k exp(-a^2/2) (a^2/2)^k / k! * Q(mu + k, b^2/2)

    Q(mu+k, x) is advanced by the exact upward recurrence
    ``Q(n+1, x) = Q(n, x) + exp(-x) x^n / n!`` so every term stays positive.
    """
    _check_mu(mu)
    _check_nonneg("a", a)
    _check_nonneg("b", b)
    lam = 0.5 * a * a
    x = 0.5 * b * b
    if math.isinf(x):
        return 0.0
    if lam == 0.0:
        return tail_idle(b * b, mu)
    if x == 0.0:
        return 1.0
    log_lam = math.log(lam)
    log_x = math.log(x)
    log_q = _log_upper_gamma_reg(mu, x)
    log_total = -math.inf
    k = 0
    while k < _MAX_TERMS:
        log_term = -lam + k * log_lam - math.lgamma(k + 1) + log_q
        log_total = _log_add(log_total, log_term)
        if k > lam and log_term - log_total < math.log(SERIES_RTOL):
            break
        # Q(mu+k+1, x) = Q(mu+k, x) + exp(-x) x^(mu+k) / (mu+k)!
        n = mu + k
        log_q = _log_add(log_q, -x + n * log_x - math.lgamma(n + 1))
        k += 1
    return min(1.0, math.exp(log_total))


def tail_busy(t: float, p: DetectionParams) -> float:
    """P(Y > t) with ``gamma > 0``: Q_mu(sqrt(2*gamma), sqrt(t))."""
    _check_nonneg("t", t)
    if not p.gamma > 0:
        raise ValueError("busy tail needs gamma > 0; route n=0 to tail_idle")
    return marcum_q(p.mu, math.sqrt(2.0 * p.gamma), math.sqrt(t))


@dataclass(frozen=True)
class EnergyDetector:
    """Busy/idle verdict model for a CCA against a fixed threshold.

    ``snr_per_tx`` is the linear P0rx/Pnoise of one transmitter; with the
    identical-path-loss abstraction ``n`` transmitters give ``gamma = n*snr``.
    """

    mu: int = 1
    tnr_db: float = 5.0
    snr_per_tx: float = 10.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_mu(self.mu)
        if not self.snr_per_tx > 0:
            raise ValueError("snr_per_tx must be > 0")

    @property
    def y_thv(self) -> float:
        return threshold_from_tnr_db(self.tnr_db, self.mu)

    def false_alarm(self) -> float:
        return tail_idle(self.y_thv, self.mu)

    def detect_prob(self, n: int) -> float:
        """Probability that ``n >= 1`` concurrent transmitters trip the threshold."""
        if n < 1:
            raise ValueError("detect_prob needs n >= 1; use false_alarm for n=0")
        hit = self._cache.get(n)
        if hit is None:
            hit = tail_busy(self.y_thv, DetectionParams(self.mu, n * self.snr_per_tx, self.y_thv))
            self._cache[n] = hit
        return hit
