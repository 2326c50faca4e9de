"""Piecewise-linear time trajectories and Riemann-sum subdivisions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Field snapshots at knot times, linearly interpolated in between.

    The time derivative is piecewise constant; at a knot the slope of the
    interval to the right is used (the last interval at the final time).
    """

    times: np.ndarray
    values: np.ndarray  # (n_knots, *field_shape)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise ValueError("a trajectory needs at least two knots")
        if not np.all(np.diff(times) > 0):
            raise ValueError("knot times must be strictly increasing")
        if times[0] != 0.0:
            raise ValueError("the first knot must be at t = 0")
        if len(values) != len(times):
            raise ValueError("one snapshot per knot is required")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value, T: float) -> "Trajectory":
        value = np.asarray(value, dtype=float)
        return cls(np.array([0.0, T]), np.stack([value, value]))

    @classmethod
    def ramp(cls, start, stop, T: float) -> "Trajectory":
        return cls(np.array([0.0, T]), np.stack([np.asarray(start, float), np.asarray(stop, float)]))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def _interval(self, t: float) -> int:
        T = self.T
        if not -1e-12 * T <= t <= T * (1 + 1e-12):
            raise ValueError(f"t = {t} outside [0, {T}]")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), len(self.times) - 2)

    def eval(self, t: float) -> np.ndarray:
        i = self._interval(t)
        t0, t1 = self.times[i], self.times[i + 1]
        lam = (t - t0) / (t1 - t0)
        if lam == 0.0:
            return self.values[i].copy()
        if lam == 1.0:
            return self.values[i + 1].copy()
        return (1.0 - lam) * self.values[i] + lam * self.values[i + 1]

    def rate(self, t: float) -> np.ndarray:
        i = self._interval(t)
        return (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])

    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))


def eval(traj: Trajectory, t: float) -> np.ndarray:  # noqa: A001 - mirrors the public verb
    return traj.eval(t)


def rate(traj: Trajectory, t: float) -> np.ndarray:
    return traj.rate(t)


@dataclass(frozen=True, eq=False)
class Subdivision:
    """Points ``a = t0 < ... < tn = b``, tagged at right endpoints."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 2 or not np.all(np.diff(pts) > 0):
            raise ValueError("subdivision points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def max_step(self) -> float:
        return float(np.diff(self.points).max())

    def __len__(self) -> int:
        return len(self.points) - 1


def uniform_subdivision(n: int, a: float, b: float) -> Subdivision:
    return Subdivision(np.linspace(a, b, n + 1))


def shifted_grid_subdivision(m: int, s: float, a: float, b: float) -> Subdivision:
    """Points ``{a} + {s + i/m strictly inside (a, b)} + {b}``."""
    if m < 1:
        raise ValueError("grid density must be >= 1")
    if not 0.0 <= s <= 1.0:
        raise ValueError("shift must lie in [0, 1]")
    lo = int(np.floor((a - s) * m)) - 1
    hi = int(np.ceil((b - s) * m)) + 1
    tol = 1e-12 * max(1.0, abs(a), abs(b))
    inner = [s + i / m for i in range(lo, hi + 1)]
    inner = [x for x in inner if a + tol < x < b - tol]
    return Subdivision(np.array([a, *inner, b]))


def _reference_integrals(f, points: np.ndarray, oversample: int):
    out = []
    for t0, t1 in zip(points[:-1], points[1:]):
        h = (t1 - t0) / oversample
        mids = t0 + h * (np.arange(oversample) + 0.5)
        vals = np.array([np.asarray(f(x), dtype=float) for x in mids])
        out.append(h * vals.sum(axis=0))
    return out


@dataclass(frozen=True)
class RiemannDefect:
    riemann_sum: float | np.ndarray
    sum_error: float
    strong_defect: float


def riemann_defect(f: Callable[[float], float | np.ndarray], sub: Subdivision,
                   antiderivative: Callable[[float], float | np.ndarray] | None = None,
                   oversample: int = 10) -> RiemannDefect:
    """Right-tagged Riemann sum of ``f`` on ``sub`` against reference integrals.

    Without an ``antiderivative`` the reference integral of each subinterval
    uses the composite midpoint rule with ``oversample`` panels.
    """
    pts = sub.points
    if antiderivative is not None:
        prim = [np.asarray(antiderivative(x), dtype=float) for x in pts]
        ref = [b - a for a, b in zip(prim[:-1], prim[1:])]
    else:
        ref = _reference_integrals(f, pts, oversample)
    terms = [(t1 - t0) * np.asarray(f(t1), dtype=float) for t0, t1 in zip(pts[:-1], pts[1:])]
    total = sum(terms)
    exact = sum(ref)
    strong = float(sum(np.linalg.norm(np.atleast_1d(a - b)) for a, b in zip(terms, ref)))
    return RiemannDefect(total, float(np.linalg.norm(np.atleast_1d(total - exact))), strong)


@dataclass(frozen=True)
class ShiftSearch:
    m: int
    best_shift: float
    best_defect: float
    mean_defect: float


def best_shift(fs: Sequence[Callable], m: int, a: float, b: float, shifts: np.ndarray,
               antiderivatives: Sequence[Callable | None] | None = None,
               l1_norms: Sequence[float] | None = None, oversample: int = 10) -> ShiftSearch:
    """Search sampled shifts for the subdivision with the smallest defect.

    For a single function the score is its strong defect.  For a battery the
    score is ``sum_j 2**-(j+1) * strong_defect_j / ||f_j||_1``, which yields a
    subdivision that is good for all functions at once.
    """
    antiderivatives = antiderivatives or [None] * len(fs)
    if l1_norms is None:
        l1_norms = [1.0] * len(fs) if len(fs) == 1 else [
            max(_l1_norm(f, a, b), 1e-300) for f in fs
        ]
    scores = []
    for s in shifts:
        sub = shifted_grid_subdivision(m, float(s), a, b)
        if len(fs) == 1:
            score = riemann_defect(fs[0], sub, antiderivatives[0], oversample).strong_defect
        else:
            score = sum(
                2.0 ** -(j + 1) * riemann_defect(f, sub, F, oversample).strong_defect / n
                for j, (f, F, n) in enumerate(zip(fs, antiderivatives, l1_norms))
            )
        scores.append(score)
    scores = np.array(scores)
    k = int(np.argmin(scores))
    return ShiftSearch(m, float(shifts[k]), float(scores[k]), float(scores.mean()))


def _l1_norm(f, a: float, b: float, n: int = 4096) -> float:
    h = (b - a) / n
    mids = a + h * (np.arange(n) + 0.5)
    return float(h * sum(np.linalg.norm(np.atleast_1d(f(x))) for x in mids))


# Test functions used by the demo and the shift-search checks.

def _step(c: float, jump: float = 1.0):
    return (lambda t: jump * float(t >= c)), (lambda t: jump * max(t - c, 0.0))


STEP_BATTERY = [_step(1.0 / 3.0), _step(0.7071067811865476, 2.0), _step(0.15, -1.5)]


def battery(name: str):
    """``[(f, antiderivative), ...]`` for a named test battery on [0, 1]."""
    if name == "step":
        return list(STEP_BATTERY)
    if name == "smooth":
        return [(np.sin, lambda t: -np.cos(t)), (lambda t: t * t, lambda t: t ** 3 / 3.0)]
    if name == "kinked":
        return [(lambda t: abs(t - 0.4), lambda t: 0.5 * (t - 0.4) * abs(t - 0.4))]
    if name == "linear":
        return [(lambda t: t, lambda t: 0.5 * t * t)]
    raise ValueError(f"unknown battery {name!r}")


def step_battery_sum(t: float) -> float:
    return sum(f(t) for f, _ in STEP_BATTERY)


def step_battery_sum_antiderivative(t: float) -> float:
    return sum(F(t) for _, F in STEP_BATTERY)
