"""Coalescent samplers: genealogies of n samples, and SMC / SMC' pairwise paths.

Every sampler works by time rescaling: a unit exponential E becomes a waiting
time through the inverse of the cumulative rate. Scalar samplers follow the
per-draw contracts directly; the ``*_batch`` variants do the same thing on
arrays and are what the Monte Carlo estimator uses.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
from typing import IO, Sequence

import numpy as np

from .demography import Trajectory, cum_rate, inv_cum_rate


class Variant(str, enum.Enum):
    SMC = "SMC"
    SMC_PRIME = "SMC_PRIME"


@dataclasses.dataclass(frozen=True)
class RngSpec:
    """A (seed, stream) pair naming one reproducible Philox substream."""

    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream < 2**64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self, *subkeys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *subkeys))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream: int) -> "RngSpec":
        return RngSpec(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngSpec):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclasses.dataclass(frozen=True)
class Genealogy:
    times: tuple[float, ...]
    n: int
    origin: float = 0.0

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        object.__setattr__(self, "times", t)
        if self.n < 2 or len(t) != self.n - 1:
            raise ValueError("a genealogy of n samples has n - 1 coalescent times")
        prev = self.origin
        for x in t:
            if not x > prev:
                raise ValueError(f"coalescent times must increase strictly: {t}")
            prev = x


@dataclasses.dataclass(frozen=True)
class SmcPath:
    times: tuple[float, ...]
    variant: Variant
    repeat_flags: tuple[bool, ...]

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        flags = tuple(bool(f) for f in self.repeat_flags)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "repeat_flags", flags)
        object.__setattr__(self, "variant", Variant(self.variant))
        if len(flags) != max(len(t) - 1, 0):
            raise ValueError("need one repeat flag per transition")
        if any(not x > 0 for x in t):
            raise ValueError("path times must be positive")
        for i, f in enumerate(flags):
            if f != (t[i + 1] == t[i]):
                raise ValueError("repeat flag must mark bit-equal consecutive times")
        if self.variant is Variant.SMC and any(flags):
            raise ValueError("SMC paths cannot repeat a time")


def n_pairs(k: int) -> float:
    return k * (k - 1) / 2.0


# -- scalar samplers ----------------------------------------------------------

def sample_coal_time(traj: Trajectory, k: int, start: float, rng) -> float:
    if k < 2:
        raise ValueError("need at least two lineages")
    e = as_generator(rng).standard_exponential()
    return inv_cum_rate(traj, start, e / n_pairs(k))


def sample_genealogy(traj: Trajectory, n: int, origin: float = 0.0, rng=None) -> Genealogy:
    if n < 2:
        raise ValueError("need n >= 2")
    g = as_generator(rng)
    t = origin
    times = []
    for k in range(n, 1, -1):
        t = sample_coal_time(traj, k, t, g)
        times.append(t)
    return Genealogy(tuple(times), n, origin)


def smc_step(traj: Trajectory, x_prev: float, rng) -> float:
    """Next pairwise time after a recombination: breakpoint u ~ U(0, x_prev), then
    the detached lineage coalesces from u at rate 1/N(t)."""
    if not x_prev > 0:
        raise ValueError("x_prev must be positive")
    g = as_generator(rng)
    u = x_prev * g.random()
    return inv_cum_rate(traj, u, g.standard_exponential())


def smc_prime_step(traj: Trajectory, x_prev: float, rng) -> tuple[float, bool]:
    if not x_prev > 0:
        raise ValueError("x_prev must be positive")
    g = as_generator(rng)
    u = x_prev * g.random()
    e = g.standard_exponential()
    if e / 2.0 < cum_rate(traj, u, x_prev):
        if g.random() < 0.5:
            return x_prev, True
        tau = inv_cum_rate(traj, u, e / 2.0)
        return min(tau, np.nextafter(x_prev, 0.0)), False
    return inv_cum_rate(traj, x_prev, g.standard_exponential()), False


def sample_smc_path(traj: Trajectory, J: int, variant: Variant | str, rng) -> SmcPath:
    if J < 1:
        raise ValueError("need J >= 1")
    variant = Variant(variant)
    g = as_generator(rng)
    times = [sample_coal_time(traj, 2, 0.0, g)]
    flags = []
    for _ in range(J - 1):
        if variant is Variant.SMC:
            times.append(smc_step(traj, times[-1], g))
            flags.append(False)
        else:
            x, rep = smc_prime_step(traj, times[-1], g)
            times.append(x)
            flags.append(rep)
    return SmcPath(tuple(times), variant, tuple(flags))


def sample_independent_loci(traj: Trajectory, n: int, J: int, origin: float = 0.0,
                            rng: RngSpec | None = None) -> list[Genealogy]:
    rng = rng or RngSpec()
    return [sample_genealogy(traj, n, origin, rng.generator(j)) for j in range(J)]


# -- batch samplers -----------------------------------------------------------

def coal_times_batch(traj: Trajectory, k: int, start: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    e = rng.standard_exponential(np.shape(start))
    return traj.inv_cum_array(traj.cum_array(start) + e / n_pairs(k))


def genealogy_batch(traj: Trajectory, n: int, size: int, rng: np.random.Generator,
                    origin: float = 0.0) -> np.ndarray:
    """Array of shape (size, n - 1), ascending along axis 1."""
    out = np.empty((size, n - 1))
    lam = np.full(size, traj.cum_array(origin))
    for col, k in enumerate(range(n, 1, -1)):
        lam = lam + rng.standard_exponential(size) / n_pairs(k)
        out[:, col] = traj.inv_cum_array(lam)
    return out


def smc_step_batch(traj: Trajectory, x: np.ndarray, variant: Variant | str,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One transition from each entry of ``x``; returns (next times, repeat flags).

    Every call draws the same number of variates whatever branch is taken, so
    two trajectories driven by the same generator see common random numbers.
    """
    variant = Variant(variant)
    x = np.asarray(x, dtype=float)
    size = x.shape[0]
    u = x * rng.random(size)
    lam_u = traj.cum_array(u)
    e1 = rng.standard_exponential(size)
    if variant is Variant.SMC:
        return traj.inv_cum_array(lam_u + e1), np.zeros(size, dtype=bool)
    coin = rng.random(size)
    e2 = rng.standard_exponential(size)
    lam_x = traj.cum_array(x)
    event = lam_u + e1 / 2.0 < lam_x
    rep = event & (coin < 0.5)
    inner = event & ~rep
    nxt = np.empty(size)
    nxt[rep] = x[rep]
    if inner.any():
        tau = traj.inv_cum_array(lam_u[inner] + e1[inner] / 2.0)
        nxt[inner] = np.minimum(tau, np.nextafter(x[inner], 0.0))
    outer = ~event
    if outer.any():
        nxt[outer] = traj.inv_cum_array(lam_x[outer] + e2[outer])
    return nxt, rep


def smc_path_batch(traj: Trajectory, J: int, variant: Variant | str, size: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Paths of shape (size, J) plus repeat flags of shape (size, J - 1)."""
    variant = Variant(variant)
    times = np.empty((size, J))
    repeats = np.zeros((size, max(J - 1, 0)), dtype=bool)
    times[:, 0] = traj.inv_cum_array(rng.standard_exponential(size))
    for i in range(1, J):
        times[:, i], repeats[:, i - 1] = smc_step_batch(traj, times[:, i - 1], variant, rng)
    return times, repeats


# -- CSV dump -----------------------------------------------------------------

CSV_COLUMNS = ("replicate", "locus", "k_or_variant", "time", "repeat_flag")


def write_genealogies_csv(fh: IO[str], times: np.ndarray, n: int, J: int) -> None:
    """``times`` has shape (replicates * J, n - 1), replicate-major."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row, tt in enumerate(times):
        rep, locus = divmod(row, J)
        for col, t in enumerate(tt):
            w.writerow((rep, locus, n - col, repr(float(t)), 0))


def write_smc_csv(fh: IO[str], times: np.ndarray, repeats: np.ndarray,
                  variant: Variant | str) -> None:
    variant = Variant(variant)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep, (tt, ff) in enumerate(zip(times, repeats)):
        for locus, t in enumerate(tt):
            flag = int(ff[locus - 1]) if locus > 0 else 0
            w.writerow((rep, locus, variant.value, repr(float(t)), flag))


def paths_from_batch(times: np.ndarray, repeats: np.ndarray,
                     variant: Variant | str) -> Sequence[SmcPath]:
    return [SmcPath(tuple(t), variant, tuple(r)) for t, r in zip(times, repeats)]
