"""Monte Carlo success rates of the Bayes-factor classifier, and Bayes risk.

Replicates are generated in fixed-size blocks. Block ``k`` always draws from
substream ``k`` of the configured seed, whatever the number of workers, so
results are reproducible bit for bit. Both hypotheses reuse the same block
substreams (common random numbers).
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from scipy import integrate

from .demography import BottleneckPair, ScaledPair, Trajectory
from .exact import CorrectProb, Method
from .simulate import (
    Genealogy,
    RngSpec,
    SmcPath,
    Variant,
    genealogy_batch,
    n_pairs,
    smc_path_batch,
)
from .specialfn import exp_integral_generalized

log = logging.getLogger(__name__)


class Model(str, enum.Enum):
    INDEPENDENT = "INDEPENDENT"
    SMC = "SMC"
    SMC_PRIME = "SMC_PRIME"


@dataclasses.dataclass(frozen=True)
class MCConfig:
    replicates_per_hypothesis: int = 10_000
    rng: RngSpec = RngSpec()
    model: Model = Model.INDEPENDENT
    workers: int = 1
    block_size: int = 8192

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.replicates_per_hypothesis < 100:
            raise ValueError("need at least 100 replicates per hypothesis")
        if self.workers < 1 or self.block_size < 1:
            raise ValueError("workers and block_size must be positive")


# -- log Bayes factors ------------------------------------------------------

def log_bf_iso_batch(pair: BottleneckPair, times: np.ndarray, origin: float = 0.0) -> np.ndarray:
    """log BF_12 for genealogies stored as rows of ascending times.

    Only intervals that touch the window contribute; everything else adds an
    exact 0.0, so a genealogy entirely outside the window scores exactly zero.
    """
    times = np.atleast_2d(times)
    T, end = pair.T, pair.T + pair.S
    inv_gap = 1.0 / pair.level(2) - 1.0 / pair.level(1)
    log_ratio = math.log(pair.b) - math.log(pair.a)
    n = times.shape[1] + 1
    total = np.zeros(times.shape[0])
    start = np.full(times.shape[0], float(origin))
    for col in range(times.shape[1]):
        k = n - col
        stop = times[:, col]
        overlap = np.clip(np.minimum(stop, end) - np.maximum(start, T), 0.0, None)
        inside = (stop >= T) & (stop < end)
        term = np.where(overlap > 0, (n_pairs(k) * overlap) * inv_gap, 0.0)
        term = term + np.where(inside, log_ratio, 0.0)
        total = total + term
        start = stop
    return total


def log_bf_iso(pair: BottleneckPair, loci: Sequence[Genealogy]) -> float:
    total = 0.0
    for g in loci:
        total += float(log_bf_iso_batch(pair, np.asarray([g.times]), g.origin)[0])
    return total


def log_lik_iso_batch(traj: Trajectory, times: np.ndarray, origin: float = 0.0) -> np.ndarray:
    """Log density of each row of ascending coalescent times under ``traj``."""
    times = np.atleast_2d(times)
    n = times.shape[1] + 1
    total = np.zeros(times.shape[0])
    lam_prev = np.full(times.shape[0], traj.cum_array(origin))
    for col in range(times.shape[1]):
        C = n_pairs(n - col)
        lam = traj.cum_array(times[:, col])
        total = total + (math.log(C) - np.log(traj.size_array(times[:, col])) - C * (lam - lam_prev))
        lam_prev = lam
    return total


def log_bf_batch(pair: BottleneckPair | ScaledPair, times: np.ndarray, origin: float = 0.0) -> np.ndarray:
    """Independent-loci log BF per genealogy, for either kind of hypothesis pair."""
    if isinstance(pair, BottleneckPair):
        return log_bf_iso_batch(pair, times, origin)
    return (log_lik_iso_batch(pair.trajectory(1), times, origin)
            - log_lik_iso_batch(pair.trajectory(2), times, origin))


def _require_constant(traj: Trajectory):
    if not traj.is_piecewise_constant:
        raise ValueError("SMC likelihoods need piecewise-constant trajectories")


def _log_int(traj: Trajectory, k: float, m: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """log int_0^m exp(-k (Lambda(ref) - Lambda(u))) du, for m <= ref."""
    lam_ref = traj.cum_array(ref)
    acc = np.full(np.shape(m), -np.inf)
    starts, levels, cum = traj._starts, traj._levels, traj._cum
    ends = np.append(starts[1:], np.inf)
    top = float(np.max(m)) if np.size(m) else 0.0
    for s, e, lev, c0 in zip(starts, ends, levels, cum):
        if s >= top:
            break
        hi = np.minimum(m, e)
        width = hi - s
        ok = width > 0
        w = np.where(ok, width, 1.0)
        with np.errstate(divide="ignore"):
            term = (math.log(lev / k) - k * (lam_ref - (c0 + w / lev))
                    + np.log(-np.expm1(-k * w / lev)))
        acc = np.logaddexp(acc, np.where(ok, term, -np.inf))
    return acc


def log_lik_smc_batch(traj: Trajectory, times: np.ndarray, repeats: np.ndarray,
                      variant: Variant | str) -> np.ndarray:
    """Log likelihood of each row of ``times`` as an SMC or SMC' path."""
    _require_constant(traj)
    variant = Variant(variant)
    times = np.atleast_2d(times)
    x0 = times[:, 0]
    total = -np.log(traj.size_array(x0)) - traj.cum_array(x0)
    for i in range(1, times.shape[1]):
        x, y = times[:, i - 1], times[:, i]
        if variant is Variant.SMC:
            term = -np.log(x) - np.log(traj.size_array(y)) + _log_int(traj, 1.0, np.minimum(x, y), y)
        else:
            rep = repeats[:, i - 1]
            term = np.empty_like(x)
            below = ~rep & (y < x)
            above = ~rep & (y > x)
            if rep.any():
                xr = x[rep]
                h = _log_int(traj, 2.0, xr, xr)
                term[rep] = np.log(-np.expm1(h - np.log(xr))) - math.log(2.0)
            if below.any():
                xb, yb = x[below], y[below]
                term[below] = (-np.log(xb) - np.log(traj.size_array(yb))
                               + _log_int(traj, 2.0, yb, yb))
            if above.any():
                xa, ya = x[above], y[above]
                term[above] = (-np.log(xa) - np.log(traj.size_array(ya))
                               - (traj.cum_array(ya) - traj.cum_array(xa))
                               + _log_int(traj, 2.0, xa, xa))
        total = total + term
    return total


def log_bf_smc_batch(pair: BottleneckPair, times: np.ndarray, repeats: np.ndarray,
                     variant: Variant | str) -> np.ndarray:
    t1, t2 = pair.trajectory(1), pair.trajectory(2)
    return log_lik_smc_batch(t1, times, repeats, variant) - log_lik_smc_batch(t2, times, repeats, variant)


def log_bf_smc(pair: BottleneckPair, path: SmcPath) -> float:
    times = np.asarray([path.times])
    repeats = np.asarray([path.repeat_flags], dtype=bool).reshape(1, -1)
    return float(log_bf_smc_batch(pair, times, repeats, path.variant)[0])


def smc_transition_density(traj: Trajectory, x_prev: float, x_next: float,
                           variant: Variant | str = Variant.SMC) -> float:
    """Density of x_next given x_prev; for SMC' and x_next == x_prev, the atom mass."""
    variant = Variant(variant)
    times = np.array([[x_prev, x_next]])
    repeats = np.array([[variant is Variant.SMC_PRIME and x_next == x_prev]])
    full = log_lik_smc_batch(traj, times, repeats, variant)[0]
    first = -math.log(traj.size_array(x_prev)) - float(traj.cum_array(x_prev))
    return math.exp(full - first)


# -- estimator ------------------------------------------------------------

def _simulate_block(pair, traj: Trajectory, n: int, J: int, model: Model,
                    size: int, gen: np.random.Generator) -> np.ndarray:
    if model is Model.INDEPENDENT:
        times = genealogy_batch(traj, n, size * J, gen)
        per_locus = log_bf_batch(pair, times).reshape(size, J)
    else:
        variant = Variant.SMC if model is Model.SMC else Variant.SMC_PRIME
        times, repeats = smc_path_batch(traj, J, variant, size, gen)
        return log_bf_smc_batch(pair, times, repeats, variant)
    total = np.zeros(size)
    for j in range(J):  # left to right, per replicate
        total = total + per_locus[:, j]
    return total


def estimate_p_correct(pair: BottleneckPair | ScaledPair, n: int, J: int,
                       cfg: MCConfig = MCConfig()) -> CorrectProb:
    """Fraction of simulated datasets the Bayes-factor classifier labels correctly.

    Exact ties (log BF == 0) count one half, as a fair coin would. The reported
    standard error is the binomial one on the pooled estimate; it is never
    smaller than the per-arm figure kept in ``info["se_per_arm"]``.
    """
    if n < 2 or J < 1:
        raise ValueError("need n >= 2 and J >= 1")
    if cfg.model is not Model.INDEPENDENT:
        if n != 2:
            raise ValueError("SMC and SMC' models are pairwise only (n = 2)")
        _require_constant(pair.trajectory(1))
        _require_constant(pair.trajectory(2))
    R = cfg.replicates_per_hypothesis
    blocks = [(k, min(cfg.block_size, R - k * cfg.block_size))
              for k in range(-(-R // cfg.block_size))]
    trajs = (pair.trajectory(1), pair.trajectory(2))

    def run(block):
        k, size = block
        counts = []
        for i, traj in enumerate(trajs):
            lbf = _simulate_block(pair, traj, n, J, cfg.model, size, cfg.rng.generator(k))
            wins = int(np.count_nonzero(lbf > 0 if i == 0 else lbf < 0))
            ties = int(np.count_nonzero(lbf == 0))
            counts.append((wins, ties))
        return counts

    if cfg.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, blocks))
    else:
        results = [run(b) for b in blocks]
    wins = [sum(r[i][0] for r in results) for i in (0, 1)]
    ties = [sum(r[i][1] for r in results) for i in (0, 1)]
    arm = [(2 * w + t) / (2.0 * R) for w, t in zip(wins, ties)]
    p = 0.5 * (arm[0] + arm[1])
    se = math.sqrt(max(p * (1 - p), 0.0) / (2 * R))
    se_arm = 0.5 * math.sqrt(sum(q * (1 - q) for q in arm) / R)
    return CorrectProb(p, Method.MC, mc_se=se,
                       info={"arm_p": tuple(arm), "ties": tuple(ties), "replicates": R,
                             "se_per_arm": se_arm})


def run_record(scenario: str, pair: BottleneckPair, n: int, J: int, cfg: MCConfig,
               result: CorrectProb | None = None) -> dict:
    result = result or estimate_p_correct(pair, n, J, cfg)
    return {
        "scenario": scenario,
        "model": cfg.model.value,
        "n": n,
        "J": J,
        "replicates": cfg.replicates_per_hypothesis,
        "p_correct": result.value,
        "se": result.mc_se,
        "seed": cfg.rng.seed,
    }


# -- Bayes risk of the conjugate-prior estimator -----------------------------

@dataclasses.dataclass(frozen=True)
class RiskQuery:
    J: int
    c_true: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.J < 1 or min(self.c_true, self.alpha, self.beta) <= 0:
            raise ValueError("J >= 1 and positive c, alpha, beta required")


def bayes_risk_quadrature(q: RiskQuery) -> float:
    """Squared-error risk of the posterior mean, integrating over J * mean(x) ~ Gamma(J, c)."""
    J, c = q.J, q.c_true
    lg = math.lgamma(J)

    def integrand(z):
        if z <= 0:
            return 0.0 if J > 1 else ((q.alpha + J) / q.beta - c) ** 2 * c
        dens = math.exp(J * math.log(c) + (J - 1) * math.log(z) - c * z - lg)
        return ((q.alpha + J) / (q.beta + z) - c) ** 2 * dens

    mode = (J - 1) / c
    spread = math.sqrt(J) / c
    cuts = sorted({0.0, max(mode - 4 * spread, 0.0), mode, mode + 4 * spread})
    total = 0.0
    for lo, hi in zip(cuts, cuts[1:]):
        if hi > lo:
            total += integrate.quad(integrand, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0]
    total += integrate.quad(integrand, cuts[-1], math.inf, epsabs=0, epsrel=1e-13, limit=200)[0]
    return total


def bayes_risk_closed_form(J: int, c: float) -> float:
    """Closed form for alpha = beta = 1."""
    e = exp_integral_generalized(J, c)
    return c * (-(J + 1) * math.exp(c) * (J * J + (J + 3) * c - 1) * e + (J + 1) ** 2 + c)


def bayes_risk_conjugate(q: RiskQuery) -> tuple[float, float]:
    """Return (risk, root risk)."""
    quad = bayes_risk_quadrature(q)
    risk = quad
    if q.alpha == 1.0 and q.beta == 1.0:
        closed = bayes_risk_closed_form(q.J, q.c_true)
        if abs(closed - quad) <= 1e-8 * abs(quad):
            risk = closed
        else:
            log.warning("closed-form risk %.12g disagrees with quadrature %.12g (J=%d, c=%g)",
                        closed, quad, q.J, q.c_true)
    return risk, math.sqrt(risk)
