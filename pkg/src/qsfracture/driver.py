"""Discrete-time quasistatic evolution, energy audit and refinement study."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import (EnergyBreakdown, FractureModel, body_diff_pairing, body_rate, body_work,
                     bulk_differential_pairing, crack_energy, surface_diff_pairing, surface_rate,
                     surface_work, total_energy)
from .sbv import CrackState, Deformation, interpolate, retie
from .signals import shifted_grid_subdivision
from .solver import (SolveSettings, dof_map_for, exhaustive_minimize, floating_components,
                     minimize_step)

log = logging.getLogger(__name__)


class EvolutionWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or len(pts) < 2:
            raise ValueError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise ValueError("time grids start at 0")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("time grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, T: float, n: int) -> "TimeGrid":
        return cls(np.linspace(0.0, T, n + 1))

    @classmethod
    def shifted(cls, T: float, m: int, shift: float) -> "TimeGrid":
        return cls(shifted_grid_subdivision(m, shift, 0.0, T).points)

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def max_step(self) -> float:
        return float(np.diff(self.points).max())

    def __len__(self) -> int:
        return len(self.points) - 1


@dataclass(frozen=True, eq=False)
class TraceStep:
    index: int
    t: float
    crack: CrackState
    energy: EnergyBreakdown
    theta: float
    cumulative_work: float
    competitor_gap: float
    euler_residual: float
    oracle_certified: bool
    u: Deformation | None = None


@dataclass(eq=False)
class EvolutionTrace:
    steps: list[TraceStep]
    model: FractureModel | None = None
    strategy: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    @property
    def certified(self) -> bool:
        return all(s.oracle_certified for s in self.steps)

    def nucleation_steps(self) -> list[int]:
        return [i for i in range(1, len(self.steps))
                if self.steps[i].crack.facets != self.steps[i - 1].crack.facets]

    def state_at(self, t: float) -> TraceStep:
        """Piecewise-constant interpolation: the last step with ``t_i <= t``."""
        times = self.times
        i = int(np.searchsorted(times, t * (1 + 1e-14) + 1e-300, side="right")) - 1
        return self.steps[max(i, 0)]


# -- power and work ---------------------------------------------------------------

def _psi_rate_field(model: FractureModel, t: float, u: Deformation) -> Deformation:
    return interpolate(u.dof_map, model.psi.rate(t))


def boundary_traction_work(model: FractureModel, t: float, u: Deformation,
                           psi_rate: Deformation | None = None,
                           load_time: float | None = None) -> float:
    """``<g(t), psi'(t)>``: the power of the boundary deformation.

    ``psi_rate`` is the extension of the boundary velocity used as test
    field (nodal interpolation of the prescribed rate by default).
    """
    lt = t if load_time is None else load_time
    v = _psi_rate_field(model, t, u) if psi_rate is None else psi_rate
    return (bulk_differential_pairing(model.bulk, u, v)
            - body_diff_pairing(model.body, lt, u, v)
            - surface_diff_pairing(model.surface, lt, u, v))


def theta(model: FractureModel, t: float, u: Deformation, load_time: float | None = None) -> float:
    """Power functional at time ``t`` for the state ``u``.

    ``load_time`` is the time at which the force differentials are frozen
    (the grid point owning ``t`` in the piecewise-constant interpolation).
    Rates use the right-interval slope at knots.
    """
    return (boundary_traction_work(model, t, u, load_time=load_time)
            - body_rate(model.body, t, u) - surface_rate(model.surface, t, u))


def work_increment(model: FractureModel, t0: float, t1: float, u: Deformation) -> float:
    """Exact integral of the power over ``[t0, t1]`` with the state frozen at ``u``."""
    dm = u.dof_map
    dpsi = Deformation(dm, interpolate(dm, model.psi.eval(t1)).values
                       - interpolate(dm, model.psi.eval(t0)).values)
    return (bulk_differential_pairing(model.bulk, u, dpsi)
            - body_diff_pairing(model.body, t0, u, dpsi)
            - (body_work(model.body, t1, u) - body_work(model.body, t0, u))
            - surface_diff_pairing(model.surface, t0, u, dpsi)
            - (surface_work(model.surface, t1, u) - surface_work(model.surface, t0, u)))


# -- evolution --------------------------------------------------------------------

def _warn_floating(model: FractureModel, crack: CrackState, t: float, seen: set) -> None:
    if model.body.eps > 0 or crack.facets in seen:
        return
    seen.add(crack.facets)
    pieces = floating_components(dof_map_for(model.mesh, crack, model.m))
    if pieces:
        msg = (f"t={t:g}: crack {crack.sorted()} isolates {len(pieces)} piece(s) from the "
               "Dirichlet boundary and eps = 0")
        log.warning(msg)
        warnings.warn(msg, EvolutionWarning, stacklevel=3)


def run_evolution(model: FractureModel, grid: TimeGrid, settings: SolveSettings | None = None,
                  initial_crack: CrackState | None = None,
                  u0: Deformation | None = None) -> EvolutionTrace:
    """Solve the incremental problems on ``grid`` starting from ``(u0, initial_crack)``.

    Without ``u0`` the initial state is the minimiser at ``t = 0`` among
    cracks containing ``initial_crack``.
    """
    settings = settings or SolveSettings()
    if abs(grid.T - model.T) > 1e-12 * model.T:
        raise ValueError(f"grid ends at {grid.T}, model horizon is {model.T}")
    crack0 = initial_crack or CrackState()
    crack0.validate(model.mesh)
    seen: set = set()

    if u0 is None:
        res0 = minimize_step(model, 0.0, crack0, settings)
        u_prev, crack_prev, energy0 = res0.u, res0.crack, res0.energy
        gap0, res_e0, cert0 = res0.competitor_gap, res0.euler_residual, res0.oracle_certified
    else:
        if not u0.crack <= crack0:
            raise ValueError("u0 jumps outside the initial crack")
        u_prev, crack_prev = retie(u0, dof_map_for(model.mesh, crack0, model.m)), crack0
        energy0 = total_energy(model, 0.0, u_prev, crack_prev)
        gap0, res_e0, cert0 = 0.0, np.nan, False
        n_free = len(model.mesh.brittle_facets - crack0.facets)
        if n_free <= settings.exhaustive_cap:
            check = exhaustive_minimize(model, 0.0, crack0, settings)
            if check.energy.total < energy0.total - 1e-10 * (1 + abs(energy0.total)):
                msg = "initial configuration is not a minimum energy configuration at t = 0"
                log.warning(msg)
                warnings.warn(msg, EvolutionWarning, stacklevel=2)
            else:
                cert0 = True
    _warn_floating(model, crack_prev, 0.0, seen)

    times = grid.points
    steps = [TraceStep(0, 0.0, crack_prev, energy0, theta(model, 0.0, u_prev), 0.0,
                       gap0, res_e0, cert0, u_prev)]
    cumulative = 0.0
    for i in range(1, len(times)):
        t_prev, t = float(times[i - 1]), float(times[i])
        cumulative += work_increment(model, t_prev, t, u_prev)
        res = minimize_step(model, t, crack_prev, settings, u_prev, t_prev)
        if not crack_prev <= res.crack:
            raise AssertionError(f"step {i}: crack shrank")
        _warn_floating(model, res.crack, t, seen)
        steps.append(TraceStep(i, t, res.crack, res.energy, theta(model, t, res.u), cumulative,
                               res.competitor_gap, res.euler_residual, res.oracle_certified, res.u))
        u_prev, crack_prev = res.u, res.crack
    return EvolutionTrace(steps, model, settings.strategy)


def sample_minimality(model: FractureModel, step: TraceStep, n_probes: int = 200,
                      rng: np.random.Generator | None = None, scale: float = 1.0) -> float:
    """Smallest ``E(t)(v, G) - E_i`` over random admissible ``(v, G)`` with ``G >= crack_i``."""
    rng = rng or np.random.default_rng(0)
    free = sorted(model.mesh.brittle_facets - step.crack.facets)
    worst = np.inf
    for _ in range(n_probes):
        extra = [f for f in free if rng.random() < 0.3]
        crack = step.crack | extra
        dm = dof_map_for(model.mesh, crack, model.m)
        base = retie(step.u, dm)
        noise = rng.normal(scale=scale, size=base.values.shape) * rng.random()
        noise[dm.pinned] = 0.0
        v = Deformation(dm, base.values + noise)
        worst = min(worst, total_energy(model, step.t, v, crack).total - step.energy.total)
    return float(worst)


# -- audit ------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditReport:
    upper_gaps: np.ndarray
    max_upper_gap: float
    balance_defect: float
    certified: bool
    nucleation_steps: tuple[int, ...]
    min_competitor_gap: float
    warnings: tuple[str, ...] = ()

    def defect_excluding(self, skip: Sequence[int]) -> float:
        keep = [i for i in range(len(self.upper_gaps)) if i not in set(skip)]
        return float(np.abs(self.upper_gaps[keep]).max(initial=0.0))


def energy_audit(trace: EvolutionTrace) -> AuditReport:
    """Compare ``E_i - E_0`` with the cumulative work of the loads."""
    e0 = trace.steps[0].energy.total
    gaps = np.array([s.energy.total - e0 - s.cumulative_work for s in trace.steps])
    notes = []
    min_gap = min((s.competitor_gap for s in trace.steps[1:]), default=0.0)
    if min_gap < -1e-12:
        notes.append(f"minimality witness violated: competitor gap {min_gap:.3e}")
    if not trace.certified:
        notes.append("greedy run: energy-balance defects may be solver artefacts")
    for msg in notes:
        log.warning(msg)
    return AuditReport(gaps, float(gaps.max()), float(np.abs(gaps).max()), trace.certified,
                       tuple(trace.nucleation_steps()), float(min_gap), tuple(notes))


# -- refinement study -------------------------------------------------------------

def theta_l1_distance(a: EvolutionTrace, b: EvolutionTrace) -> float:
    """Exact ``L1(0, T)`` distance between two piecewise-constant power functions."""
    model = a.model
    knots = [a.times, b.times, model.psi.times, model.body.f.times, model.surface.g.times]
    pts = np.unique(np.concatenate(knots))
    pts = pts[(pts >= 0) & (pts <= model.T)]
    total = 0.0
    for s0, s1 in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (s0 + s1)
        sa, sb = a.state_at(mid), b.state_at(mid)
        ta = theta(model, mid, sa.u, load_time=sa.t)
        tb = theta(model, mid, sb.u, load_time=sb.t)
        total += (s1 - s0) * abs(ta - tb)
    return total


def theta_integral(trace: EvolutionTrace, t: float | None = None) -> float:
    """``int_0^t theta_k`` by exact piecewise integration (default ``t = T``)."""
    model = trace.model
    t = model.T if t is None else t
    pts = np.unique(np.concatenate([trace.times, model.psi.times, model.body.f.times,
                                    model.surface.g.times, [t]]))
    pts = pts[pts <= t]
    total = 0.0
    for s0, s1 in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (s0 + s1)
        st = trace.state_at(mid)
        total += (s1 - s0) * theta(model, mid, st.u, load_time=st.t)
    return total


@dataclass(frozen=True)
class ConvergenceReport:
    steps: tuple[int, ...]
    deltas: tuple[float, ...]
    probe_times: tuple[float, ...]
    elastic: np.ndarray  # (n_grids, n_probes)
    crack: np.ndarray  # (n_grids, n_probes)
    theta_l1_diffs: tuple[float, ...]
    nucleation_times: tuple[float, ...]
    traces: tuple[EvolutionTrace, ...] = field(default=(), repr=False, compare=False)

    @property
    def elastic_diffs(self) -> np.ndarray:
        return np.abs(np.diff(self.elastic, axis=0))

    @property
    def crack_diffs(self) -> np.ndarray:
        return np.abs(np.diff(self.crack, axis=0))


def default_probes(T: float, nucleation_times: Sequence[float], margin: float) -> list[float]:
    probes = [0.25 * T, 0.5 * T, 0.75 * T, T]
    return [p for p in probes if all(abs(p - tn) > margin for tn in nucleation_times)]


def convergence_study(model: FractureModel, base_steps: int, n_refinements: int,
                      probe_times: Sequence[float] | None = None,
                      settings: SolveSettings | None = None,
                      initial_crack: CrackState | None = None,
                      allow_greedy: bool = False) -> ConvergenceReport:
    """Run uniform grids with ``base_steps * 2**j`` steps, ``j = 0..n_refinements``."""
    settings = settings or SolveSettings()
    if settings.strategy != "exhaustive" and not allow_greedy:
        raise ValueError("convergence study needs certified runs; pass allow_greedy=True")
    counts = [base_steps * 2 ** j for j in range(n_refinements + 1)]
    traces = [run_evolution(model, TimeGrid.uniform(model.T, n), settings, initial_crack)
              for n in counts]
    finest = traces[-1]
    nucleation = tuple(float(finest.steps[i].t) for i in finest.nucleation_steps())
    if probe_times is None:
        probe_times = default_probes(model.T, nucleation, 2.0 * model.T / counts[0])
    probes = tuple(float(p) for p in probe_times)
    el = np.array([[tr.state_at(p).energy.elastic for p in probes] for tr in traces])
    kk = np.array([[crack_energy(model.toughness, tr.state_at(p).crack) for p in probes]
                   for tr in traces])
    diffs = tuple(theta_l1_distance(a, b) for a, b in zip(traces[:-1], traces[1:]))
    return ConvergenceReport(tuple(counts), tuple(model.T / n for n in counts), probes,
                             el, kk, diffs, nucleation, tuple(traces))
