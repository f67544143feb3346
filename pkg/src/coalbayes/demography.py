"""Effective population size trajectories and the cumulative coalescent rate.

All times and sizes are in coalescent units. A trajectory is a sequence of
segments, each either constant or exponential, with the last one extending to
infinity. The cumulative rate ``Lambda(t0, t1) = int_{t0}^{t1} dt / N(t)`` and
its inverse are evaluated in closed form segment by segment.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class RateMassExhausted(ValueError):
    """Raised when the requested cumulative rate exceeds ``Lambda(t0, inf)``."""


class IdenticalHypotheses(ValueError):
    """Raised when a quantity is undefined because the two hypotheses coincide."""


@dataclasses.dataclass(frozen=True)
class Segment:
    start: float
    level: float
    rate: float = 0.0

    @property
    def kind(self) -> str:
        return "constant" if self.rate == 0.0 else "exponential"

    def size(self, t: float) -> float:
        if self.rate == 0.0:
            return self.level
        return self.level * math.exp(self.rate * (t - self.start))

    def mass(self, p: float, q: float) -> float:
        """Integral of 1/N over [p, q] with start <= p <= q."""
        if q <= p:
            return 0.0
        if self.rate == 0.0:
            return (q - p) / self.level
        if math.isinf(q):
            if self.rate <= 0:
                return math.inf
            return math.exp(-self.rate * (p - self.start)) / (self.rate * self.level)
        r = self.rate
        return (
            math.exp(-r * (p - self.start)) * -math.expm1(-r * (q - p)) / (r * self.level)
        )

    def invert(self, p: float, y: float) -> float:
        """Return q >= p with mass(p, q) == y, or inf if the segment cannot supply y."""
        if self.rate == 0.0:
            return p + y * self.level
        r = self.rate
        z = y * r * self.level * math.exp(r * (p - self.start))
        if z >= 1.0:
            return math.inf
        return p - math.log1p(-z) / r


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Piecewise N(t); breakpoints belong to the segment on their right."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("trajectory needs at least one segment")
        if segs[0].start != 0.0:
            raise ValueError("first segment must start at 0")
        for s0, s1 in zip(segs, segs[1:]):
            if not s1.start > s0.start:
                raise ValueError("segment starts must be strictly increasing")
        for s in segs:
            if not (s.level > 0 and math.isfinite(s.level)):
                raise ValueError(f"segment level must be positive, got {s.level}")
            if not math.isfinite(s.rate):
                raise ValueError("growth rate must be finite")
        starts = np.array([s.start for s in segs], dtype=float)
        levels = np.array([s.level for s in segs], dtype=float)
        rates = np.array([s.rate for s in segs], dtype=float)
        ends = np.append(starts[1:], np.inf)
        masses = np.array([s.mass(s.start, e) for s, e in zip(segs, ends)])
        if np.any(~np.isfinite(masses[:-1])):
            raise ValueError("inner segments must have finite rate mass")
        cum = np.concatenate([[0.0], np.cumsum(masses[:-1])])
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_levels", levels)
        object.__setattr__(self, "_rates", rates)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_total", float(cum[-1] + masses[-1]))

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, level: float = 1.0) -> "Trajectory":
        return cls((Segment(0.0, float(level)),))

    @classmethod
    def piecewise_constant(cls, starts: Sequence[float], levels: Sequence[float]) -> "Trajectory":
        return cls(tuple(Segment(float(s), float(v)) for s, v in zip(starts, levels)))

    @classmethod
    def exponential(cls, level: float = 1.0, rate: float = 1.0) -> "Trajectory":
        return cls((Segment(0.0, float(level), float(rate)),))

    # -- properties ---------------------------------------------------------

    @property
    def is_piecewise_constant(self) -> bool:
        return all(s.rate == 0.0 for s in self.segments)

    @property
    def total_mass(self) -> float:
        """Lambda(0, inf); finite only for fast growth in the last segment."""
        return self._total

    def _index(self, t: float) -> int:
        return int(np.searchsorted(self._starts, t, side="right")) - 1

    # -- derived trajectories ----------------------------------------------

    def with_window(self, start: float, length: float, level: float) -> "Trajectory":
        """Copy with N(t) = level on [start, start + length)."""
        end = start + length
        out = [Segment(start, float(level))]
        for i, s in enumerate(self.segments):
            seg_end = self.segments[i + 1].start if i + 1 < len(self.segments) else math.inf
            if s.start < start:
                out.append(s)
            if s.start >= end:
                out.append(s)
            elif seg_end > end:
                # segment straddles the window end; resume it at `end`
                out.append(Segment(end, s.size(end), s.rate))
        out.sort(key=lambda seg: seg.start)
        return Trajectory(tuple(out))

    def shifted(self, origin: float) -> "Trajectory":
        """Trajectory seen from a sampling time ``origin`` in the past: t -> N(t + origin)."""
        if origin == 0:
            return self
        i = self._index(origin)
        segs = [Segment(0.0, self.segments[i].size(origin), self.segments[i].rate)]
        segs += [Segment(s.start - origin, s.level, s.rate) for s in self.segments[i + 1:]]
        return Trajectory(tuple(segs))

    def scaled(self, c: float) -> "Trajectory":
        return Trajectory(tuple(Segment(s.start, s.level * c, s.rate) for s in self.segments))

    # -- vectorized evaluation (absolute, from time 0) ----------------------

    def size_array(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self._starts, t, side="right") - 1
        return self._levels[idx] * np.exp(self._rates[idx] * (t - self._starts[idx]))

    def cum_array(self, t) -> np.ndarray:
        """Lambda(0, t) for an array of times."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self._starts, t, side="right") - 1
        d = t - self._starts[idx]
        lev = self._levels[idx]
        r = self._rates[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            expo = -np.expm1(-r * d) / (r * lev)
        return self._cum[idx] + np.where(r == 0.0, d / lev, expo)

    def inv_cum_array(self, y) -> np.ndarray:
        """Inverse of ``cum_array``; raises RateMassExhausted when y >= total mass."""
        y = np.asarray(y, dtype=float)
        if np.any(y >= self._total):
            raise RateMassExhausted(
                f"rate mass exhausted: requested {float(np.max(y))}, available {self._total}"
            )
        idx = np.searchsorted(self._cum, y, side="right") - 1
        rem = y - self._cum[idx]
        lev = self._levels[idx]
        r = self._rates[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            expo = -np.log1p(-rem * r * lev) / r
        return self._starts[idx] + np.where(r == 0.0, rem * lev, expo)


@dataclasses.dataclass(frozen=True)
class BottleneckPair:
    """Two hypotheses that share ``base`` except on the window [T, T+S]."""

    base: Trajectory
    T: float
    S: float
    a: float
    b: float
    N0: float = 1.0

    def __post_init__(self):
        if self.T < 0 or not self.S > 0:
            raise ValueError("need T >= 0 and S > 0")
        if not (self.a > 0 and self.b > 0 and self.N0 > 0):
            raise ValueError("a, b and N0 must be positive")

    def level(self, i: int) -> float:
        return (self.a if i == 1 else self.b) * self.N0

    def trajectory(self, i: int) -> Trajectory:
        return self.base.with_window(self.T, self.S, self.level(i))

    @property
    def identical(self) -> bool:
        return self.a == self.b

    @property
    def lam_T(self) -> float:
        return cum_rate(self.base, 0.0, self.T)

    def swapped(self) -> "BottleneckPair":
        return dataclasses.replace(self, a=self.b, b=self.a)

    def replace(self, **kw) -> "BottleneckPair":
        return dataclasses.replace(self, **kw)

    def sampled_at(self, t_sample: float) -> "BottleneckPair":
        """Same pair for samples taken ``t_sample`` in the past (t_sample <= T)."""
        if not 0 <= t_sample <= self.T:
            raise ValueError("sampling time must lie in [0, T]")
        return dataclasses.replace(self, base=self.base.shifted(t_sample), T=self.T - t_sample)


@dataclasses.dataclass(frozen=True)
class ScaledPair:
    """H1: N1(t); H2: c * N1(t) with 0 < c < 1."""

    n1: Trajectory
    c: float

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")

    def trajectory(self, i: int) -> Trajectory:
        return self.n1 if i == 1 else self.n1.scaled(self.c)


@dataclasses.dataclass(frozen=True)
class UnitScale:
    size_unit: float = 2.732e4
    years_per_time_unit: float = 68.3e4
    generation_years: float = 25.0

    def __post_init__(self):
        if min(self.size_unit, self.years_per_time_unit, self.generation_years) <= 0:
            raise ValueError("unit scale entries must be positive")


def eval_size(traj: Trajectory, t: float) -> float:
    if t < 0:
        raise ValueError("time must be nonnegative")
    return traj.segments[traj._index(t)].size(t)


def cum_rate(traj: Trajectory, t0: float, t1: float) -> float:
    """Lambda(t0, t1), summed segment by segment."""
    if not 0 <= t0 <= t1:
        raise ValueError("need 0 <= t0 <= t1")
    total = 0.0
    segs = traj.segments
    for i in range(traj._index(t0), len(segs)):
        s = segs[i]
        if s.start >= t1:
            break
        end = segs[i + 1].start if i + 1 < len(segs) else math.inf
        total += s.mass(max(t0, s.start), min(t1, end))
    return total


def inv_cum_rate(traj: Trajectory, t0: float, y: float) -> float:
    """Smallest t >= t0 with cum_rate(traj, t0, t) == y."""
    if y < 0:
        raise ValueError("y must be nonnegative")
    segs = traj.segments
    remaining = y
    for i in range(traj._index(t0), len(segs)):
        s = segs[i]
        p = max(t0, s.start)
        end = segs[i + 1].start if i + 1 < len(segs) else math.inf
        m = s.mass(p, end)
        if remaining <= m and not (math.isinf(end) and remaining == m):
            q = s.invert(p, remaining)
            return min(q, end)
        remaining -= m
    raise RateMassExhausted(f"rate mass exhausted: {remaining} left beyond t={t0}")


def delta(a: float, b: float, n0: float = 1.0) -> float:
    """Window offset at which the two single-time densities cross."""
    if a == b:
        raise IdenticalHypotheses("hypotheses identical: delta undefined")
    hi, lo = max(a, b), min(a, b)
    return hi * lo * n0 * math.log(hi / lo) / (hi - lo)


def years_to_coal(scale: UnitScale, years: float) -> float:
    return years / scale.years_per_time_unit


def coal_to_years(scale: UnitScale, t: float) -> float:
    return t * scale.years_per_time_unit


# -- scenario files ----------------------------------------------------------

BUILTIN_SCENARIOS = ("ooa", "constant", "exp-growth")


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    trajectory: Trajectory
    unit_scale: UnitScale
    bottleneck: dict
    sha256: str
    approximate: bool = False
    extra: dict = dataclasses.field(default_factory=dict)

    def pair(self, **overrides) -> BottleneckPair:
        params = {k: self.bottleneck[k] for k in ("T", "S", "a", "b", "N0") if k in self.bottleneck}
        params.update({k: v for k, v in overrides.items() if v is not None})
        missing = {"T", "S", "a", "b"} - params.keys()
        if missing:
            raise ValueError(f"scenario {self.name!r} does not fix {sorted(missing)}")
        return BottleneckPair(self.trajectory, **params)


def trajectory_from_dict(d: dict) -> Trajectory:
    segs = []
    for entry in d["segments"]:
        kind = entry.get("kind", "constant")
        if kind == "constant":
            segs.append(Segment(float(entry["start"]), float(entry["level"])))
        elif kind == "exponential":
            segs.append(Segment(float(entry["start"]), float(entry["level"]), float(entry["rate"])))
        else:
            raise ValueError(f"unknown segment kind {kind!r}")
    return Trajectory(tuple(segs))


def trajectory_to_dict(traj: Trajectory) -> dict:
    out = []
    for s in traj.segments:
        entry = {"start": s.start, "kind": s.kind, "level": s.level}
        if s.kind == "exponential":
            entry["rate"] = s.rate
        out.append(entry)
    return {"segments": out}


def parse_scenario(text: str, name: str = "<string>") -> Scenario:
    d = json.loads(text)
    us = d.get("unit_scale", {})
    return Scenario(
        name=d.get("name", name),
        trajectory=trajectory_from_dict(d),
        unit_scale=UnitScale(**us) if us else UnitScale(),
        bottleneck=dict(d.get("bottleneck", {})),
        sha256=hashlib.sha256(text.encode()).hexdigest(),
        approximate=bool(d.get("approximate", False)),
        extra={k: v for k, v in d.items()
               if k not in {"name", "segments", "unit_scale", "bottleneck", "approximate"}},
    )


def load_scenario(spec: str | Path) -> Scenario:
    """Load a builtin scenario by name or a demography file by path."""
    if str(spec) in BUILTIN_SCENARIOS:
        text = resources.files("coalbayes.data").joinpath(f"{spec}.json").read_text()
        return parse_scenario(text, str(spec))
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"unknown scenario {str(spec)!r}: not a builtin and no such file")
    return parse_scenario(path.read_text(), path.stem)


def random_piecewise(rng: np.random.Generator, max_segments: int = 8,
                     exponential: bool = True) -> Trajectory:
    """Random trajectory, used by property tests and examples."""
    k = int(rng.integers(1, max_segments + 1))
    starts = np.concatenate([[0.0], np.sort(rng.uniform(0.01, 5.0, k - 1))])
    segs: list[Segment] = []
    for i, s in enumerate(starts):
        level = float(np.exp(rng.uniform(-3, 2)))
        rate = 0.0
        if exponential and i < k - 1 and rng.random() < 0.4:
            rate = float(rng.uniform(-1.5, 1.5))
        segs.append(Segment(float(s), level, rate))
    return Trajectory(_dedupe(segs))


def _dedupe(segs: Iterable[Segment]) -> tuple[Segment, ...]:
    out: list[Segment] = []
    for s in segs:
        if out and s.start <= out[-1].start:
            continue
        out.append(s)
    return tuple(out)
