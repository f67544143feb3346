"""Closed-form success probabilities of the optimal (Bayes) classifier.

All functions take the two hypotheses with equal prior weight. Where a formula
is stated for a > b the labels are swapped internally; the success probability
of the optimal classifier does not depend on which hypothesis is called H1.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import threading
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, xlogy

from .demography import (
    BottleneckPair,
    RateMassExhausted,
    ScaledPair,
    Trajectory,
    cum_rate,
    delta,
    eval_size,
    inv_cum_rate,
)
from .simulate import RngSpec
from .specialfn import regularized_lower_gamma

log = logging.getLogger(__name__)

CELL_SKIP = 1e-14


class Method(str, enum.Enum):
    THM1 = "THM1"
    THM2 = "THM2"
    THM3 = "THM3"
    THM4 = "THM4"
    THM5 = "THM5"
    MC = "MC"
    BOUND_HELLINGER = "BOUND_HELLINGER"
    BOUND_SCALED = "BOUND_SCALED"


@dataclasses.dataclass(frozen=True)
class CorrectProb:
    value: float
    method: Method
    mc_se: Optional[float] = None
    clipped: bool = False
    info: dict = dataclasses.field(default_factory=dict, compare=False)

    def __post_init__(self):
        exact = self.method not in (Method.MC, Method.BOUND_SCALED, Method.BOUND_HELLINGER)
        if exact and not 0.5 - 1e-12 <= self.value <= 1.0 + 1e-12:
            raise ValueError(f"exact success probability out of [1/2, 1]: {self.value}")

    def __float__(self):
        return float(self.value)


@dataclasses.dataclass(frozen=True)
class WstarConfig:
    replicates: int = 100_000
    rng: RngSpec = RngSpec()

    def __post_init__(self):
        if self.replicates < 1000:
            raise ValueError("W* needs at least 1000 replicates")


def _canonical(pair: BottleneckPair) -> BottleneckPair:
    return pair if pair.a > pair.b else pair.swapped()


# -- single pairwise time -------------------------------------------------

def p_correct_single_pair(pair: BottleneckPair) -> CorrectProb:
    if pair.identical:
        return CorrectProb(0.5, Method.THM1)
    d = min(delta(pair.a, pair.b, pair.N0), pair.S)
    hi, lo = max(pair.a, pair.b) * pair.N0, min(pair.a, pair.b) * pair.N0
    excess = math.exp(-pair.lam_T) * (math.exp(-d / hi) - math.exp(-d / lo))
    return CorrectProb(0.5 + 0.5 * excess, Method.THM1)


# -- J independent pairwise times ---------------------------------------------

class _WstarTable:
    """Sorted draws of W*(l) for l = 1, 2, ..., grown on demand.

    Column j holds the j-th truncated exponential and comes from its own
    substream, so W*(l) does not depend on how far the table was grown.
    """

    def __init__(self, rate: float, S: float, replicates: int, rng: RngSpec, key: int):
        self.rate, self.S, self.R = rate, S, replicates
        self.rng, self.key = rng, key
        self._running = np.zeros(replicates)
        self._sorted: list[np.ndarray] = []
        self._lock = threading.Lock()

    def __getitem__(self, ell2: int) -> np.ndarray:
        with self._lock:
            self._grow(ell2)
        return self._sorted[ell2 - 1]

    def _grow(self, ell2: int) -> None:
        while len(self._sorted) < ell2:
            j = len(self._sorted)
            u = self.rng.generator(self.key, j).random(self.R)
            # inverse CDF of Exp(rate) truncated to [0, S]
            x = -np.log1p(u * np.expm1(-self.rate * self.S)) / self.rate
            self._running = self._running + np.minimum(x, self.S)
            self._sorted.append(np.sort(self._running))


_TABLES: dict = {}
_TABLES_LOCK = threading.Lock()


def _table(rate: float, S: float, cfg: WstarConfig, key: int) -> _WstarTable:
    k = (rate, S, cfg.replicates, cfg.rng, key)
    with _TABLES_LOCK:
        if k not in _TABLES:
            if len(_TABLES) >= 16:
                _TABLES.pop(next(iter(_TABLES)))
            _TABLES[k] = _WstarTable(rate, S, cfg.replicates, cfg.rng, key)
        return _TABLES[k]


def wstar_cdf(ell2: int, rate: float, S: float, t: float,
              cfg: WstarConfig = WstarConfig(), key: int = 0) -> float:
    """Empirical P[W*(ell2) < t] for the sum of ell2 Exp(rate) draws truncated to [0, S]."""
    if ell2 < 1:
        raise ValueError("ell2 must be at least 1")
    if t <= 0:
        return 0.0
    if t >= ell2 * S:
        return 1.0
    draws = _table(rate, S, cfg, key)[ell2]
    return float(np.searchsorted(draws, t, side="left")) / cfg.replicates


def _log_multinomial(J, l1, l2, l3, p):
    return (gammaln(J + 1) - gammaln(l1 + 1) - gammaln(l2 + 1) - gammaln(l3 + 1)
            + xlogy(l1, p[0]) + xlogy(l2, p[1]) + xlogy(l3, p[2]))


def p_correct_multi_locus(pair: BottleneckPair, J: int,
                          cfg: WstarConfig = WstarConfig()) -> CorrectProb:
    """Success probability from J independent pairwise times.

    The window sums W* are handled by Monte Carlo; the multinomial layout of
    times before / inside / after the window is enumerated exactly.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    if pair.identical:
        return CorrectProb(0.5, Method.THM2, info={"skipped_mass": 0.0})
    cp = _canonical(pair)
    d = delta(cp.a, cp.b, cp.N0)
    lam = cp.lam_T
    probs = []
    for i in (1, 2):
        level = cp.level(i)
        p1 = -math.expm1(-cum_rate(cp.trajectory(i), 0.0, cp.T))
        p3 = math.exp(-lam - cp.S / level)
        p2 = math.exp(-lam) * -math.expm1(-cp.S / level)
        probs.append((p1, p2, p3))
    # the all-before-T cell is pooled below, which needs P(L1 = J) to agree
    if not math.isclose(probs[0][0], probs[1][0], rel_tol=1e-12, abs_tol=1e-300):
        raise ArithmeticError("P(time before T) differs between the hypotheses")

    # no time inside the window: H1 wins unless every time precedes T, and that
    # tie has the same chance under both hypotheses, so the cell sums to (p1 + p3)^J
    total = 0.5 * (probs[0][0] + probs[0][2]) ** J
    skipped = 0.0
    tables = [_table(1.0 / cp.level(i), cp.S, cfg, key=i) for i in (1, 2)]
    R = cfg.replicates
    for l2 in range(1, J + 1):
        l3 = np.arange(0, J - l2 + 1)
        l1 = J - l2 - l3
        w1 = np.exp(_log_multinomial(J, l1, l2, l3, probs[0]))
        w2 = np.exp(_log_multinomial(J, l1, l2, l3, probs[1]))
        keep = (w1 >= CELL_SKIP) | (w2 >= CELL_SKIP)
        skipped += float(np.sum(w1[~keep]) + np.sum(w2[~keep])) / 2.0
        if not keep.any():
            continue
        thr = l2 * d - l3[keep] * cp.S
        # H1 decides correctly when W* exceeds the threshold, H2 when it falls short
        above1 = 1.0 - np.searchsorted(tables[0][l2], thr, side="right") / R
        below2 = np.searchsorted(tables[1][l2], thr, side="left") / R
        total += 0.5 * float(np.dot(w1[keep], above1) + np.dot(w2[keep], below2))
    total = min(max(total, 0.5), 1.0)
    return CorrectProb(total, Method.THM2, info={"skipped_mass": skipped})


# -- three samples, one locus ------------------------------------------------

def _window_pair_mass(level: float, S: float, thr: float) -> float:
    """P[2*y2 + y1 < thr, 0 < y2 < y1 < S] for three lineages that all enter the
    window, y2 and y1 being the first and second coalescence offsets from T."""
    s, k = S / level, thr / level
    m = min(s, k / 3.0)
    if m <= 0:
        return 0.0
    u1 = min(max((k - s) / 2.0, 0.0), m)
    return (-math.expm1(-3.0 * u1)
            - 1.5 * math.exp(-s) * -math.expm1(-2.0 * u1)
            + (math.exp(-3.0 * u1) - math.exp(-3.0 * m))
            - 3.0 * math.exp(-k) * (m - u1))


def _window_pair_total(level: float, S: float) -> float:
    s = S / level
    return 1.0 - 1.5 * math.exp(-s) + 0.5 * math.exp(-3.0 * s)


def n3_terms(pair: BottleneckPair) -> dict:
    """Probability of a correct decision split by where the two times fall.

    Keys are ``(hypothesis, case)`` with cases numbered as in the six-region
    table of log BF for three samples.
    """
    cp = _canonical(pair)
    A, B, S = cp.level(1), cp.level(2), cp.S
    d = delta(cp.a, cp.b, cp.N0)
    E = math.exp(-cp.lam_T)
    E3 = E ** 3
    dS = min(d, S)
    h = max(0.0, min((d - S) / 2.0, S))
    below = 1.5 * E * (1.0 - E * E)   # P[x2 < T] * P[x1 > T | x2] factor
    q = {}
    q[1, 1] = q[2, 1] = 0.5 - 0.75 * E + 0.25 * E3
    q[1, 2] = (math.exp(-dS / A) - math.exp(-S / A)) * below
    q[2, 2] = -math.expm1(-dS / B) * below
    q[1, 3] = math.exp(-S / A) * below
    q[2, 3] = 0.0
    q[1, 4] = E3 * (_window_pair_total(A, S) - _window_pair_mass(A, S, 2.0 * d))
    q[2, 4] = E3 * _window_pair_mass(B, S, 2.0 * d)
    q[1, 5] = 1.5 * E3 * math.exp(-S / A) * (math.exp(-2.0 * h / A) - math.exp(-2.0 * S / A))
    q[2, 5] = 1.5 * E3 * math.exp(-S / B) * -math.expm1(-2.0 * h / B)
    q[1, 6] = E3 * math.exp(-3.0 * S / A)
    q[2, 6] = 0.0
    return q


def xi_display(pair: BottleneckPair) -> float:
    """The xi term exactly as printed in the closed-form statement (diagnostic only)."""
    cp = _canonical(pair)
    A, B, S, T = cp.level(1), cp.level(2), cp.S, cp.T
    L = cp.lam_T
    d = delta(cp.a, cp.b, cp.N0)
    dS = min(d, S)
    h = max(0.0, min((d - S) / 2.0, S))
    xi = 3 * math.exp(2 * L) * (math.exp(-dS / A) - math.exp(-dS / B))
    xi += 3 * (math.exp(-(2 * h + S) / A) - math.exp(-(2 * h + S) / B))
    xi -= 3 * (math.exp(-dS / A) - math.exp(-dS / B))
    if S < 2 * d / 3:
        pass
    elif S < 2 * d:
        xi += (math.exp(-2 * d / B) * (1 + (2 * d - 3 * S) / B)
               - math.exp(-2 * d / A) * (1 + (2 * d - 3 * S) / A))
    else:
        xi += (math.exp(-2 * d / A) * (4 * d / A + 2) + math.exp(-2 * d / B)
               - 3 * math.exp((T - 2 * d - S) / B)
               + math.exp(-(2 * d + S) / B) * (3 * T - 3 * S - 4 * d) / B)
    return xi


def p_correct_n3(pair: BottleneckPair) -> CorrectProb:
    if pair.identical:
        return CorrectProb(0.5, Method.THM3)
    q = n3_terms(pair)
    value = 0.5 * sum(q.values())
    displayed = 0.5 + 0.25 * math.exp(-3 * pair.lam_T) * xi_display(pair)
    if abs(displayed - value) > 1e-9:
        log.debug("n=3 printed closed form differs from the case sum: %.12g vs %.12g",
                  displayed, value)
    return CorrectProb(value, Method.THM3, info={"displayed": displayed})


# -- constant-ratio hypotheses ------------------------------------------------

def _check_c(c: float):
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")


def p_correct_scaled_single(c: float) -> CorrectProb:
    _check_c(c)
    value = 0.5 * c ** (c / (1 - c)) + 0.5 * (1 - c ** (1 / (1 - c)))
    return CorrectProb(value, Method.THM4)


def p_correct_scaled_multi(c: float, J: int) -> CorrectProb:
    _check_c(c)
    if J < 1:
        raise ValueError("J must be at least 1")
    x_lo = -J * c * math.log(c) / (1 - c)
    x_hi = J * math.log(c) / (c - 1)
    value = 0.5 * (1 - (regularized_lower_gamma(J, x_lo) - regularized_lower_gamma(J, x_hi)))
    return CorrectProb(value, Method.THM5)


# -- Hellinger distance and published upper bounds -------------------------

def hellinger_sq_pair(pair: BottleneckPair) -> float:
    if pair.identical:
        return 0.0
    a, b = pair.a, pair.b
    return (math.exp(-pair.lam_T) * -math.expm1(-(a + b) * pair.S / (2 * a * b * pair.N0))
            * (math.sqrt(a) - math.sqrt(b)) ** 2 / (a + b))


def hellinger_upper_bound(pair: BottleneckPair, J: int = 1) -> CorrectProb:
    raw = 0.5 + 0.5 * math.sqrt(2.0 * J * hellinger_sq_pair(pair))
    return CorrectProb(min(raw, 1.0), Method.BOUND_HELLINGER, clipped=raw > 1.0,
                       info={"raw": raw})


def scaled_bound_kim(c: float, J: int, n: int = 2) -> CorrectProb:
    """Upper bound for N2 = c * N1, reported raw (it can exceed 1)."""
    value = 0.5 + 0.25 * math.sqrt(J * (n - 1)) * (1.0 / c - 1.0)
    return CorrectProb(value, Method.BOUND_SCALED)


# -- total variation by quadrature --------------------------------------------

def _density(traj: Trajectory, x: float) -> float:
    try:
        lam = cum_rate(traj, 0.0, x)
    except RateMassExhausted:  # pragma: no cover - cum_rate never raises
        return 0.0
    return math.exp(-lam) / eval_size(traj, x)


def _horizon(traj: Trajectory) -> float:
    # past this point both survival functions are negligible; quad covers the rest
    return inv_cum_rate(traj, 0.0, min(45.0, traj.total_mass * (1 - 1e-7)))


def tv_distance_numeric(pair: Union[BottleneckPair, ScaledPair]) -> float:
    """Total variation between the single pairwise-time laws, (1/2) int |f1 - f2|.

    Adaptive quadrature on pieces cut at every breakpoint and at every sign
    change of f1 - f2 (located numerically). Non-coalescence atoms, possible
    under fast exponential growth, are added explicitly.
    """
    t1, t2 = pair.trajectory(1), pair.trajectory(2)
    diff = lambda x: _density(t1, x) - _density(t2, x)  # noqa: E731
    horizon = max(_horizon(t1), _horizon(t2))
    cuts = {0.0, horizon}
    for s in t1.segments + t2.segments:
        if s.start < horizon:
            cuts.add(s.start)
    cuts = sorted(cuts)
    pieces = []
    for lo, hi in zip(cuts, cuts[1:]):
        grid = np.linspace(lo, hi, 65)
        # densities jump at breakpoints; sample the end of each piece from the inside
        grid[-1] = np.nextafter(hi, lo)
        vals = [diff(x) for x in grid]
        pts = [lo]
        for x0, x1, v0, v1 in zip(grid, grid[1:], vals, vals[1:]):
            if v0 * v1 < 0:
                pts.append(optimize.brentq(diff, x0, x1, xtol=1e-15, rtol=1e-15))
        pts.append(hi)
        pieces += list(zip(pts, pts[1:]))
    total = 0.0
    for lo, hi in pieces:
        if hi <= lo:
            continue
        v, _ = integrate.quad(lambda x: abs(diff(x)), lo, hi, epsabs=1e-14, epsrel=1e-12,
                              limit=200)
        total += v
    tail = integrate.quad(lambda x: abs(diff(x)), horizon, math.inf, epsabs=1e-14,
                          limit=200)[0]
    atom = abs(math.exp(-t1.total_mass) - math.exp(-t2.total_mass))
    return 0.5 * (total + tail + atom)
