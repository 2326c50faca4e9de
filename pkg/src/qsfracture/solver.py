"""Single-time minimisation: elastic equilibrium at fixed crack and the joint
crack + deformation problem over supersets of the previous crack."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .energy import EnergyBreakdown, FractureModel, _spow, crack_energy, total_energy
from .mesh import Mesh
from .sbv import (CrackState, Deformation, DofMap, assemble_dof_map, interpolate, power_rule,
                  retie)

log = logging.getLogger(__name__)

DENSE_LIMIT = 600


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    def __init__(self, message: str, component: int):
        super().__init__(message)
        self.component = component


class ConvergenceError(SolverError):
    pass


class CapExceededError(SolverError):
    pass


@dataclass(frozen=True)
class SolveSettings:
    strategy: str = "exhaustive"
    elastic_tol: float | None = None
    max_newton_iters: int = 100
    greedy_max_passes: int = 10_000
    exhaustive_cap: int = 20
    facet_tie_break: str = "lowest"
    # "error": any floating component with eps = 0 is an error
    # "auto": pin it when the load on it is balanced (exact), else error
    # "pin": always pin one node at its previous value
    floating: str = "auto"
    tie_tol: float = 1e-12

    def __post_init__(self):
        if self.strategy not in ("exhaustive", "greedy"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.floating not in ("error", "auto", "pin"):
            raise ValueError(f"unknown floating policy {self.floating!r}")
        if self.facet_tie_break != "lowest":
            raise ValueError("only the 'lowest' facet tie-break is supported")
        if self.elastic_tol is not None and not self.elastic_tol > 0:
            raise ValueError("elastic_tol must be > 0")
        if self.tie_tol < 0 or self.max_newton_iters < 1 or self.exhaustive_cap < 0:
            raise ValueError("invalid solver limits")

    def tol_for(self, model: FractureModel) -> float:
        if self.elastic_tol is not None:
            return self.elastic_tol
        quadratic = model.bulk.p == 2.0 and model.body.eps == 0.0
        return 1e-10 if quadratic else 1e-8


@lru_cache(maxsize=1 << 16)
def dof_map_for(mesh: Mesh, crack: CrackState, m: int) -> DofMap:
    return assemble_dof_map(mesh, crack, m)


@lru_cache(maxsize=1 << 14)
def _node_components(dof_map: DofMap) -> tuple[int, np.ndarray]:
    nl = dof_map.node_of.shape[1]
    rows = np.repeat(dof_map.node_of, nl, axis=1).reshape(-1)
    cols = np.tile(dof_map.node_of, (1, nl)).reshape(-1)
    graph = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(dof_map.n_nodes,) * 2)
    return connected_components(graph, directed=False)


def floating_components(dof_map: DofMap) -> list[np.ndarray]:
    """Node sets of connected pieces that touch no pinned Dirichlet node."""
    n_comp, labels = _node_components(dof_map)
    out = []
    for c in range(n_comp):
        nodes = np.flatnonzero(labels == c)
        if not dof_map.pinned[nodes].any():
            out.append(nodes)
    return out


class ElasticProblem:
    """Elastic energy ``Ec(t)`` as a function of the nodal values on one crack."""

    def __init__(self, model: FractureModel, t: float, dof_map: DofMap):
        model.check_time(t)
        self.model, self.t, self.dm = model, t, dof_map
        mesh, m = model.mesh, model.m
        self.mesh = mesh
        self.ids = dof_map.dof_ids()
        self.n = dof_map.n_dofs
        self.meas = mesh.element_measures
        self.G = mesh.shape_gradients
        self.p = model.bulk.p
        self.a = model.bulk.stiffness
        self.eps, self.q = model.body.eps, model.body.q
        if self.eps:
            self.bary, self.w = power_rule(mesh.dim, self.q)

        # dead loads enter linearly: Ec(x) = W(x) + eps/q int|u|^q - b.x
        b = np.zeros(self.n)
        nl = mesh.dim + 1
        f = model.body.f.eval(t)  # (ne, m)
        contrib = (self.meas[:, None, None] * f[:, None, :] / nl) * np.ones((1, nl, 1))
        np.add.at(b, self.ids.reshape(-1), contrib.reshape(-1))
        if mesh.surface_force_facets:
            g = model.surface.g.eval(t)
            for k, fi in enumerate(sorted(mesh.surface_force_facets)):
                fac = mesh.facets[fi]
                (e,) = fac.adjacent_elements
                simplex = list(mesh.elements[e])
                for v in fac.vertex_indices:
                    node = dof_map.node_of[e, simplex.index(v)]
                    b[node * m: node * m + m] += g[k] * fac.measure / len(fac.vertex_indices)
        self.b = b

    def values(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.dm.n_nodes, self.dm.m)

    def _grads(self, x):
        ev = self.values(x)[self.dm.node_of]
        return ev, np.einsum("eac,ead->ecd", ev, self.G)

    def energy(self, x: np.ndarray) -> float:
        _, xi = self._grads(x)
        g = np.linalg.norm(xi.reshape(len(xi), -1), axis=1)
        e = float((self.meas * self.a / self.p * g ** self.p).sum()) - float(self.b @ x)
        if self.eps:
            uq = np.einsum("ka,eac->ekc", self.bary, self.values(x)[self.dm.node_of])
            mag = np.linalg.norm(uq, axis=2)
            e += self.eps / self.q * float((self.meas[:, None] * self.w * mag ** self.q).sum())
        return e

    def gradient(self, x: np.ndarray) -> np.ndarray:
        ev, xi = self._grads(x)
        ne = len(xi)
        g = np.linalg.norm(xi.reshape(ne, -1), axis=1)
        sig = (self.a * _spow(g, self.p - 2.0))[:, None, None] * xi
        loc = self.meas[:, None, None] * np.einsum("ecd,ead->eac", sig, self.G)
        if self.eps:
            uq = np.einsum("ka,eac->ekc", self.bary, ev)
            mag = _spow(np.linalg.norm(uq, axis=2), self.q - 2.0)
            loc = loc + self.eps * np.einsum("e,k,ek,ekc,ka->eac", self.meas, self.w, mag, uq, self.bary)
        out = np.zeros(self.n)
        np.add.at(out, self.ids.reshape(-1), loc.reshape(-1))
        return out - self.b

    def hessian(self, x: np.ndarray):
        ev, xi = self._grads(x)
        ne, m, n = xi.shape
        nl = n + 1
        flat = xi.reshape(ne, m * n)
        g = np.linalg.norm(flat, axis=1)
        eye = np.eye(m * n)
        if self.p == 2.0:
            D = self.a[:, None, None] * eye
        else:
            gs = np.maximum(g, 1e-12 * (1.0 + g.max(initial=0.0)))
            unit = flat / gs[:, None]
            D = (self.a * gs ** (self.p - 2.0))[:, None, None] * (
                eye + (self.p - 2.0) * np.einsum("ei,ej->eij", unit, unit))
        D = D.reshape(ne, m, n, m, n)
        loc = np.einsum("e,ecdCD,ead,ebD->eacbC", self.meas, D, self.G, self.G)
        if self.eps:
            uq = np.einsum("ka,eac->ekc", self.bary, ev)
            mag = np.linalg.norm(uq, axis=2)
            ms = np.maximum(mag, 1e-12 * (1.0 + mag.max(initial=0.0)))
            unit = uq / ms[..., None]
            Dq = ms[..., None, None] ** (self.q - 2.0) * (
                np.eye(m) + (self.q - 2.0) * np.einsum("eki,ekj->ekij", unit, unit))
            loc = loc + self.eps * np.einsum("e,k,ekcC,ka,kb->eacbC", self.meas, self.w, Dq,
                                             self.bary, self.bary)
        loc = loc.reshape(ne, nl * m, nl * m)
        rows = np.repeat(self.ids, nl * m, axis=1).reshape(-1)
        cols = np.tile(self.ids, (1, nl * m)).reshape(-1)
        if self.n <= DENSE_LIMIT:
            H = np.zeros((self.n, self.n))
            np.add.at(H, (rows, cols), loc.reshape(-1))
            return H
        return sp.coo_matrix((loc.reshape(-1), (rows, cols)), shape=(self.n, self.n)).tocsr()


def _solve(H, rhs: np.ndarray, shift: float = 0.0) -> np.ndarray:
    if sp.issparse(H):
        if shift:
            H = H + shift * sp.identity(H.shape[0], format="csr")
        return spsolve(H.tocsc(), rhs)
    if shift:
        H = H + shift * np.eye(len(H))
    try:
        return scipy.linalg.solve(H, rhs, assume_a="sym", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.full_like(rhs, np.nan)


def _submatrix(H, idx):
    if sp.issparse(H):
        return H[idx][:, idx]
    return H[np.ix_(idx, idx)]


def euler_residual_of(problem: ElasticProblem, x: np.ndarray) -> float:
    free = ~np.repeat(problem.dm.pinned, problem.dm.m)
    grad = problem.gradient(x)
    return float(np.abs(grad[free]).max(initial=0.0))


def euler_residual(model: FractureModel, t: float, u: Deformation) -> float:
    """Largest Euler-equation defect over the nodal basis of ``AD(0, crack)``."""
    return euler_residual_of(ElasticProblem(model, t, u.dof_map), u.flat.copy())


def _pin_floating(problem: ElasticProblem, x: np.ndarray, settings: SolveSettings) -> np.ndarray:
    """Extra dof mask pinning floating pieces (eps = 0) according to the policy."""
    dm, m = problem.dm, problem.dm.m
    extra = np.zeros(problem.n, dtype=bool)
    if problem.eps > 0:
        return extra
    n_comp, labels = _node_components(dm)
    scale = 1.0 + float(np.abs(problem.b).sum())
    for nodes in floating_components(dm):
        comp = int(labels[nodes[0]])
        dofs = (nodes[:, None] * m + np.arange(m)).reshape(-1)
        net = problem.b[dofs].reshape(-1, m).sum(axis=0)
        balanced = bool(np.all(np.abs(net) <= 1e-12 * scale))
        if settings.floating == "error" or (settings.floating == "auto" and not balanced):
            raise SingularSystemError(
                f"piece {comp} (nodes {nodes.tolist()}) is not held by Dirichlet data and "
                f"eps = 0; net load {net.tolist()}", comp)
        extra[nodes[0] * m: nodes[0] * m + m] = True
    return extra


def solve_elastic(model: FractureModel, t: float, crack: CrackState,
                  settings: SolveSettings | None = None,
                  warm: Deformation | None = None) -> Deformation:
    """Minimise ``Ec(t)`` over ``AD(psi(t), crack)``."""
    settings = settings or SolveSettings()
    dm = dof_map_for(model.mesh, crack, model.m)
    problem = ElasticProblem(model, t, dm)
    if warm is not None and warm.crack <= crack:
        x = retie(warm, dm).flat.copy()
    else:
        x = np.zeros(dm.n_dofs)
    pinned = np.repeat(dm.pinned, dm.m)
    psi = interpolate(dm, model.psi.eval(t)).flat
    x[pinned] = psi[pinned]
    fixed = pinned | _pin_floating(problem, x, settings)
    free = np.flatnonzero(~fixed)
    tol = settings.tol_for(model)
    if len(free) == 0:
        return Deformation(dm, x)

    quadratic = model.bulk.p == 2.0 and model.body.eps == 0.0
    if quadratic:
        Hff = _submatrix(problem.hessian(x), free)
        for _ in range(4):
            grad = problem.gradient(x)
            if np.abs(grad[free]).max() <= tol:
                break
            x[free] += _solve(Hff, -grad[free])
        res = np.abs(problem.gradient(x)[free]).max()
        if not np.isfinite(res) or res > tol:
            raise ConvergenceError(f"linear solve left residual {res:.3e} > {tol:.1e}")
        return Deformation(dm, x)

    energy = problem.energy(x)
    shift = 0.0
    for _ in range(settings.max_newton_iters):
        grad = problem.gradient(x)
        gf = grad[free]
        if np.abs(gf).max() <= tol:
            return Deformation(dm, x)
        H = problem.hessian(x)
        Hff = _submatrix(H, free)
        diag_scale = float(np.abs(Hff.diagonal()).max(initial=0.0)) + 1e-300
        shift = max(shift * 0.1, 1e-14 * diag_scale)
        while True:
            step = _solve(Hff, -gf, shift)
            slope = float(gf @ step) if np.all(np.isfinite(step)) else np.inf
            if slope < 0:
                break
            shift = max(shift * 100.0, 1e-10 * diag_scale)
        # below this the energy cannot resolve the predicted decrease
        floor = 64.0 * np.finfo(float).eps * (1.0 + abs(energy))
        alpha, accepted = 1.0, False
        while alpha * abs(slope) > floor:
            trial = x.copy()
            trial[free] += alpha * step
            e_trial = problem.energy(trial)
            if e_trial <= energy + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # rounding floor of the energy: backtrack on the residual instead
            # (the energy is convex, so any critical point is the minimiser)
            res0 = np.abs(gf).max()
            alpha = 1.0
            while alpha > 1e-6:
                trial = x.copy()
                trial[free] += alpha * step
                if np.abs(problem.gradient(trial)[free]).max() < res0:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                raise ConvergenceError("line search failed in the elastic Newton solve")
            e_trial = problem.energy(trial)
        x, energy = trial, e_trial
    res = np.abs(problem.gradient(x)[free]).max()
    if res <= tol:
        return Deformation(dm, x)
    raise ConvergenceError(f"Newton did not converge: residual {res:.3e} > {tol:.1e}")


# -- incremental problem ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StepResult:
    t: float
    u: Deformation
    crack: CrackState
    energy: EnergyBreakdown
    euler_residual: float
    competitor_gap: float
    oracle_certified: bool
    solves: int = 0
    competitor_energy: float = field(default=np.nan)


def competitor(model: FractureModel, t: float, crack_prev: CrackState,
               u_prev: Deformation | None, t_prev: float | None) -> Deformation:
    """``u_prev + psi(t) - psi(t_prev)`` on the previous crack (``psi(t)`` if no history)."""
    dm = dof_map_for(model.mesh, crack_prev, model.m)
    psi_t = interpolate(dm, model.psi.eval(t))
    if u_prev is None:
        return psi_t
    psi_prev = interpolate(dm, model.psi.eval(t_prev))
    base = retie(u_prev, dm)
    return Deformation(dm, base.values + psi_t.values - psi_prev.values)


class _Evaluator:
    """Memoised ``crack -> (u, total energy)`` at one time."""

    def __init__(self, model, t, settings, warm):
        self.model, self.t, self.settings, self.warm = model, t, settings, warm
        self.cache: dict[frozenset, tuple[Deformation, EnergyBreakdown]] = {}

    def __call__(self, crack: CrackState, warm: Deformation | None = None):
        key = crack.facets
        if key not in self.cache:
            u = solve_elastic(self.model, self.t, crack, self.settings, warm or self.warm)
            self.cache[key] = (u, total_energy(self.model, self.t, u, crack))
        return self.cache[key]

    @property
    def solves(self) -> int:
        return len(self.cache)


def _finish(model, t, settings, crack_prev, u_prev, t_prev, u, crack, energy, certified, solves):
    comp = competitor(model, t, crack_prev, u_prev, t_prev)
    e_comp = total_energy(model, t, comp, crack_prev).total
    gap = e_comp - energy.total
    if gap < -1e-12 * (1.0 + abs(e_comp)):
        log.warning("t=%g: minimiser is worse than the competitor by %.3e", t, -gap)
    return StepResult(t, u, crack, energy, euler_residual(model, t, u), gap, certified,
                      solves, e_comp)


def _tie_key(crack: CrackState):
    return (len(crack), tuple(crack.sorted()))


def exhaustive_minimize(model: FractureModel, t: float, crack_prev: CrackState,
                        settings: SolveSettings | None = None,
                        u_prev: Deformation | None = None,
                        t_prev: float | None = None) -> StepResult:
    """Global minimiser of ``E(t)`` over all crack supersets of ``crack_prev``.

    Supersets are visited in increasing order of the lower bound
    ``Ec_min + K(crack)``, where ``Ec_min`` is the elastic minimum with every
    brittle facet cracked (elastic minima decrease as the crack grows).
    Candidates whose bound exceeds the best energy found are provably not
    minimisers and are skipped.
    """
    settings = settings or SolveSettings()
    mesh = model.mesh
    free = sorted(mesh.brittle_facets - crack_prev.facets)
    if len(free) > settings.exhaustive_cap:
        raise CapExceededError(
            f"{len(free)} candidate facets exceed the exhaustive cap {settings.exhaustive_cap}")
    warm = None
    if u_prev is not None:
        warm = competitor(model, t, crack_prev, u_prev, t_prev)
    ev = _Evaluator(model, t, settings, warm)

    costs = np.array([model.toughness.facet_cost(i) for i in free])
    k_prev = crack_energy(model.toughness, crack_prev)
    u_best, e_best = ev(crack_prev)
    best = [(crack_prev, u_best, e_best)]
    if free:
        full = crack_prev | free
        ec_floor = ev(full)[1].elastic
        n = len(free)
        masks = np.arange(1, 1 << n, dtype=np.int64)
        bound = np.full(len(masks), ec_floor + k_prev)
        card = np.zeros(len(masks), dtype=np.int64)
        for j in range(n):
            bit = (masks >> j) & 1
            bound += bit * costs[j]
            card += bit
        e_min = e_best.total
        if settings.floating != "pin":
            # e_min only decreases, so anything above the current bound is out
            keep = bound <= e_min + settings.tie_tol * (1 + abs(e_min))
            masks, bound, card = masks[keep], bound[keep], card[keep]
        order = np.lexsort((masks, card, bound))
        for idx in order:
            if settings.floating != "pin" and bound[idx] > e_min + settings.tie_tol * (1 + abs(e_min)):
                break
            mask = int(masks[idx])
            crack = crack_prev | (free[j] for j in range(n) if mask >> j & 1)
            u, e = ev(crack)
            best.append((crack, u, e))
            e_min = min(e_min, e.total)
    e_min = min(e.total for _, _, e in best)
    ties = [b for b in best if b[2].total <= e_min + settings.tie_tol * (1 + abs(e_min))]
    crack, u, energy = min(ties, key=lambda b: _tie_key(b[0]))
    return _finish(model, t, settings, crack_prev, u_prev, t_prev, u, crack, energy, True, ev.solves)


def greedy_minimize(model: FractureModel, t: float, crack_prev: CrackState,
                    settings: SolveSettings | None = None,
                    u_prev: Deformation | None = None,
                    t_prev: float | None = None) -> StepResult:
    """Add one facet at a time, always the one lowering ``E(t)`` the most."""
    settings = settings or SolveSettings()
    warm = None
    if u_prev is not None:
        warm = competitor(model, t, crack_prev, u_prev, t_prev)
    ev = _Evaluator(model, t, settings, warm)
    crack = crack_prev
    u, energy = ev(crack)
    for _ in range(settings.greedy_max_passes):
        trials = []
        for f in sorted(model.mesh.brittle_facets - crack.facets):
            cand = crack | [f]
            cu, ce = ev(cand, warm=u)
            trials.append((ce.total, f, cand, cu, ce))
        if not trials:
            break
        e_low = min(tr[0] for tr in trials)
        tol = settings.tie_tol * (1 + abs(energy.total))
        if not e_low < energy.total - tol:
            break
        pick = min((tr for tr in trials if tr[0] <= e_low + tol), key=lambda tr: tr[1])
        _, _, crack, u, energy = pick
    return _finish(model, t, settings, crack_prev, u_prev, t_prev, u, crack, energy, False, ev.solves)


def minimize_step(model: FractureModel, t: float, crack_prev: CrackState,
                  settings: SolveSettings | None = None, u_prev: Deformation | None = None,
                  t_prev: float | None = None) -> StepResult:
    settings = settings or SolveSettings()
    fn = exhaustive_minimize if settings.strategy == "exhaustive" else greedy_minimize
    return fn(model, t, crack_prev, settings, u_prev, t_prev)

