"""Energy functionals of a cracked hyperelastic body under dead loads.

Stored energy density ``W(x, xi) = a(x)/p |xi|^p``, crack energy
``sum_f kappa(x_f, nu_f) |f|``, body-force potential
``F(t, x, z) = f(t, x).z - eps/q |z|^q`` and surface potential
``G(t, x, z) = g(t, x).z``.  The elastic energy is ``W - F - G``; the total
energy adds the crack energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .mesh import Mesh
from .sbv import (CrackState, Deformation, bulk_point_values, norms, power_rule,
                  surface_trace_values)
from .signals import Trajectory

log = logging.getLogger(__name__)


def _spow(x: np.ndarray, e: float) -> np.ndarray:
    """``x**e`` for ``x >= 0`` with ``0**e := 0`` (also for negative ``e``)."""
    out = np.zeros_like(x, dtype=float)
    nz = x > 0
    out[nz] = x[nz] ** e
    return out


@dataclass(frozen=True, eq=False)
class BulkModel:
    p: float
    stiffness: np.ndarray  # per element

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("bulk exponent p must be > 1")
        a = np.array(self.stiffness, dtype=float).reshape(-1)
        if not np.all(a > 0):
            raise ValueError("stiffness must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "stiffness", a)

    @classmethod
    def uniform(cls, mesh: Mesh, a: float, p: float = 2.0) -> "BulkModel":
        return cls(p, np.full(mesh.n_elements, float(a)))

    @property
    def a_min(self) -> float:
        return float(self.stiffness.min())

    @property
    def a_max(self) -> float:
        return float(self.stiffness.max())

    def density(self, grads: np.ndarray) -> np.ndarray:
        """Per-element ``W`` for (n_elements, m, n) gradients."""
        g = np.linalg.norm(grads.reshape(len(grads), -1), axis=1)
        return self.stiffness / self.p * g ** self.p

    def stress(self, grads: np.ndarray) -> np.ndarray:
        """Per-element ``dW/dxi = a |xi|^(p-2) xi``."""
        g = np.linalg.norm(grads.reshape(len(grads), -1), axis=1)
        return (self.stiffness * _spow(g, self.p - 2.0))[:, None, None] * grads


@dataclass(frozen=True, eq=False)
class ToughnessModel:
    """Crack energy density per unit facet measure.

    ``isotropic``: ``kappa = k_f |nu|``; ``anisotropic``: ``kappa = |A_f nu|``
    with ``A_f`` symmetric positive definite.
    """

    mesh: Mesh
    mode: str
    k: np.ndarray | None = None  # (n_facets,)
    A: np.ndarray | None = None  # (n_facets, n, n)

    def __post_init__(self):
        n = self.mesh.dim
        brittle = sorted(self.mesh.brittle_facets)
        if self.mode == "isotropic":
            k = np.array(self.k, dtype=float).reshape(-1)
            if k.shape != (self.mesh.n_facets,):
                raise ValueError("isotropic toughness needs one value per facet")
            if brittle and not np.all(k[brittle] > 0):
                raise ValueError("toughness must be positive on brittle facets")
            k.setflags(write=False)
            object.__setattr__(self, "k", k)
        elif self.mode == "anisotropic":
            A = np.array(self.A, dtype=float).reshape(self.mesh.n_facets, n, n)
            for i in brittle:
                if not np.allclose(A[i], A[i].T, atol=1e-14):
                    raise ValueError(f"toughness matrix of facet {i} is not symmetric")
                if np.linalg.eigvalsh(A[i]).min() <= 0:
                    raise ValueError(f"toughness matrix of facet {i} is not positive definite")
            A.setflags(write=False)
            object.__setattr__(self, "A", A)
        else:
            raise ValueError(f"unknown toughness mode {self.mode!r}")

    @classmethod
    def isotropic(cls, mesh: Mesh, k) -> "ToughnessModel":
        k = np.broadcast_to(np.asarray(k, dtype=float), (mesh.n_facets,))
        return cls(mesh, "isotropic", k=k)

    @classmethod
    def anisotropic(cls, mesh: Mesh, A) -> "ToughnessModel":
        n = mesh.dim
        A = np.broadcast_to(np.asarray(A, dtype=float), (mesh.n_facets, n, n))
        return cls(mesh, "anisotropic", A=A)

    def kappa(self, facet: int, nu: np.ndarray) -> float:
        nu = np.asarray(nu, dtype=float)
        if self.mode == "isotropic":
            return float(self.k[facet] * np.linalg.norm(nu))
        return float(np.linalg.norm(self.A[facet] @ nu))

    def facet_cost(self, facet: int) -> float:
        """Energy of cracking one facet; zero on the Neumann boundary."""
        if facet in self.mesh.neumann_facets:
            return 0.0
        f = self.mesh.facets[facet]
        return self.kappa(facet, f.normal) * f.measure

    def bounds(self) -> tuple[float, float]:
        """``(kappa1, kappa2)`` with ``kappa1 |nu| <= kappa <= kappa2 |nu|``."""
        ids = sorted(self.mesh.brittle_facets)
        if not ids:
            return (1.0, 1.0)
        if self.mode == "isotropic":
            return float(self.k[ids].min()), float(self.k[ids].max())
        eig = np.array([np.linalg.eigvalsh(self.A[i]) for i in ids])
        return float(eig.min()), float(eig.max())


@dataclass(frozen=True, eq=False)
class BodyForceModel:
    """Dead load ``f`` (per element, ``m`` components) plus ``-eps/q |z|^q``."""

    f: Trajectory  # field shape (n_elements, m)
    eps: float = 0.0
    q: float = 2.0

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("body-force exponent q must be > 1")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")

    @classmethod
    def zero(cls, mesh: Mesh, T: float, m: int = 1, eps: float = 0.0, q: float = 2.0):
        return cls(Trajectory.constant(np.zeros((mesh.n_elements, m)), T), eps, q)

    def is_zero(self) -> bool:
        return self.eps == 0.0 and not np.any(self.f.values)


@dataclass(frozen=True, eq=False)
class SurfaceForceModel:
    """Dead load ``g`` on the surface-force facets (sorted facet order)."""

    g: Trajectory  # field shape (n_surface_facets, m)
    r: float = 2.0

    def __post_init__(self):
        if not self.r > 1:
            raise ValueError("surface exponent r must be > 1")

    @classmethod
    def zero(cls, mesh: Mesh, T: float, m: int = 1, r: float = 2.0):
        return cls(Trajectory.constant(np.zeros((len(mesh.surface_force_facets), m)), T), r)

    def is_zero(self) -> bool:
        return not np.any(self.g.values)


@dataclass(frozen=True, eq=False)
class FractureModel:
    """Everything needed to evaluate energies at any time in ``[0, T]``."""

    mesh: Mesh
    bulk: BulkModel
    toughness: ToughnessModel
    psi: Trajectory  # vertex field (n_vertices, m)
    body: BodyForceModel
    surface: SurfaceForceModel
    m: int = 1

    def __post_init__(self):
        mesh, m = self.mesh, self.m
        if self.bulk.stiffness.shape != (mesh.n_elements,):
            raise ValueError("stiffness needs one value per element")
        if self.psi.shape != (mesh.n_vertices, m):
            raise ValueError(f"boundary deformation must have shape {(mesh.n_vertices, m)}")
        if self.body.f.shape != (mesh.n_elements, m):
            raise ValueError(f"body force must have shape {(mesh.n_elements, m)}")
        if self.surface.g.shape != (len(mesh.surface_force_facets), m):
            raise ValueError("surface force needs one row per surface-force facet")
        for name, traj in (("body force", self.body.f), ("surface force", self.surface.g)):
            if abs(traj.T - self.T) > 1e-12 * self.T:
                raise ValueError(f"{name} trajectory must span [0, {self.T}]")

    @classmethod
    def simple(cls, mesh: Mesh, bulk: BulkModel, toughness: ToughnessModel, psi: Trajectory,
               m: int = 1, body: BodyForceModel | None = None,
               surface: SurfaceForceModel | None = None) -> "FractureModel":
        T = psi.T
        return cls(mesh, bulk, toughness, psi,
                   body or BodyForceModel.zero(mesh, T, m),
                   surface or SurfaceForceModel.zero(mesh, T, m), m)

    @property
    def T(self) -> float:
        return self.psi.T

    def check_time(self, t: float) -> None:
        if not -1e-12 * self.T <= t <= self.T * (1 + 1e-12):
            raise ValueError(f"t = {t} outside [0, {self.T}]")


# -- bulk ---------------------------------------------------------------------

def bulk_energy(model: BulkModel, u: Deformation) -> float:
    return float((u.mesh.element_measures * model.density(u.gradients())).sum())


def bulk_differential_pairing(model: BulkModel, u: Deformation, v: Deformation) -> float:
    """``<dW(grad u), grad v>``; ``u`` and ``v`` may live on different cracks."""
    s = model.stress(u.gradients())
    return float(np.einsum("e,ecd,ecd->", u.mesh.element_measures, s, v.gradients()))


# -- crack --------------------------------------------------------------------

def crack_energy(model: ToughnessModel, crack: CrackState | Iterable[int]) -> float:
    """Sum of facet costs; facets on the Neumann boundary cost nothing."""
    facets = crack.facets if isinstance(crack, CrackState) else set(crack)
    return float(sum(model.facet_cost(i) for i in sorted(facets)))


# -- body forces --------------------------------------------------------------

def _element_means(u: Deformation) -> np.ndarray:
    return u.element_values().mean(axis=1)


def _power_integral(u: Deformation, q: float) -> float:
    bary, w = power_rule(u.mesh.dim, q)
    vals = np.linalg.norm(bulk_point_values(u, bary), axis=2)
    return float((u.mesh.element_measures[:, None] * w[None, :] * vals ** q).sum())


def body_work(model: BodyForceModel, t: float, u: Deformation) -> float:
    """``F(t)(u) = int f.u - eps/q int |u|^q``."""
    f = model.f.eval(t)
    lin = float(np.einsum("e,ec,ec->", u.mesh.element_measures, f, _element_means(u)))
    if model.eps:
        lin -= model.eps / model.q * _power_integral(u, model.q)
    return lin


def body_diff_pairing(model: BodyForceModel, t: float, u: Deformation, v: Deformation) -> float:
    """``<dF(t)(u), v> = int (f - eps |u|^(q-2) u).v``."""
    f = model.f.eval(t)
    out = float(np.einsum("e,ec,ec->", u.mesh.element_measures, f, _element_means(v)))
    if model.eps:
        bary, w = power_rule(u.mesh.dim, model.q)
        uq = bulk_point_values(u, bary)
        vq = bulk_point_values(v, bary)
        mag = _spow(np.linalg.norm(uq, axis=2), model.q - 2.0)
        out -= model.eps * float(np.einsum("e,k,ek,ekc,ekc->", u.mesh.element_measures, w, mag, uq, vq))
    return out


def body_rate(model: BodyForceModel, t: float, u: Deformation) -> float:
    """``dF/dt(t)(u) = int df/dt . u``."""
    fdot = model.f.rate(t)
    return float(np.einsum("e,ec,ec->", u.mesh.element_measures, fdot, _element_means(u)))


# -- surface forces -----------------------------------------------------------

def _surface_means(u: Deformation) -> tuple[np.ndarray, np.ndarray]:
    mesh = u.mesh
    if not mesh.surface_force_facets:
        return np.zeros(0), np.zeros((0, u.dof_map.m))
    bary = np.full((1, mesh.dim), 1.0 / mesh.dim)
    ids, vals, _, _ = surface_trace_values(u, mesh.surface_force_facets, bary)
    meas = np.array([mesh.facets[i].measure for i in ids])
    return meas, vals[:, 0, :]


def surface_work(model: SurfaceForceModel, t: float, u: Deformation) -> float:
    meas, means = _surface_means(u)
    return float(np.einsum("f,fc,fc->", meas, model.g.eval(t), means)) if len(meas) else 0.0


def surface_diff_pairing(model: SurfaceForceModel, t: float, u: Deformation, v: Deformation) -> float:
    # dead load: the differential does not depend on u
    return surface_work(model, t, v)


def surface_rate(model: SurfaceForceModel, t: float, u: Deformation) -> float:
    meas, means = _surface_means(u)
    return float(np.einsum("f,fc,fc->", meas, model.g.rate(t), means)) if len(meas) else 0.0


# -- totals -------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBreakdown:
    bulk: float
    crack: float
    body_work: float
    surface_work: float
    load_work: float = field(init=False)
    elastic: float = field(init=False)
    internal: float = field(init=False)
    total: float = field(init=False)

    def __post_init__(self):
        load = self.body_work + self.surface_work
        internal = self.bulk + self.crack
        object.__setattr__(self, "load_work", load)
        object.__setattr__(self, "elastic", self.bulk - load)
        object.__setattr__(self, "internal", internal)
        object.__setattr__(self, "total", internal - load)

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in
                ("bulk", "crack", "body_work", "surface_work", "elastic", "total",
                 "internal", "load_work")}


def elastic_energy(model: FractureModel, t: float, u: Deformation) -> float:
    return (bulk_energy(model.bulk, u) - body_work(model.body, t, u)
            - surface_work(model.surface, t, u))


def total_energy(model: FractureModel, t: float, u: Deformation,
                 crack: CrackState | None = None) -> EnergyBreakdown:
    model.check_time(t)
    crack = u.crack if crack is None else crack
    if not u.crack <= crack:
        raise ValueError("deformation jumps outside the crack")
    return EnergyBreakdown(
        bulk=bulk_energy(model.bulk, u),
        crack=crack_energy(model.toughness, crack),
        body_work=body_work(model.body, t, u),
        surface_work=surface_work(model.surface, t, u),
    )


def elastic_differential_pairing(model: FractureModel, t: float, u: Deformation,
                                 v: Deformation) -> float:
    """``<dW(grad u), grad v> - <dF(t)(u), v> - <dG(t)(u), v>``."""
    return (bulk_differential_pairing(model.bulk, u, v)
            - body_diff_pairing(model.body, t, u, v)
            - surface_diff_pairing(model.surface, t, u, v))


# -- growth bounds ------------------------------------------------------------

def _young(c: float, delta: float, s: float) -> float:
    """Smallest ``beta`` with ``c x <= delta x^s + beta`` for all ``x >= 0``."""
    if c <= 0:
        return 0.0
    return (1.0 - 1.0 / s) * c ** (s / (s - 1.0)) * (delta * s) ** (-1.0 / (s - 1.0))


@dataclass(frozen=True)
class GrowthConstants:
    alpha0: float
    beta0: float
    alpha1: float
    beta1: float
    lower_asserted: bool


@dataclass(frozen=True)
class GrowthReport:
    value: float
    lower: float
    upper: float
    lower_asserted: bool

    @property
    def ok(self) -> bool:
        tol = 1e-10 * (1.0 + abs(self.value))
        upper_ok = self.value <= self.upper + tol
        lower_ok = (not self.lower_asserted) or self.lower <= self.value + tol
        return upper_ok and lower_ok


def growth_constants(model: FractureModel) -> GrowthConstants:
    """Constants of the coercivity and boundedness estimates of ``Ec``.

    Lower bound ``alpha0 (||grad u||_p^p + eps ||u||_q^q) - beta0``; upper
    bound ``alpha1 (||grad u||_p^p + ||u||_q^q + ||u||_r,S^r) + beta1``.
    The surface term is controlled through the element-wise estimate
    ``||u||_r,f <= |f|^(1/r) (|e|^(-1/q) ||u||_q,e + d_e |e|^(-1/p) ||grad u||_p,e)``.
    With ``eps = 0`` and nonzero loads the lower bound is not asserted.
    """
    mesh, p = model.mesh, model.bulk.p
    q, eps, r = model.body.q, model.body.eps, model.surface.r
    meas = mesh.element_measures
    qc, rc = q / (q - 1.0), r / (r - 1.0)

    # piecewise-linear loads: the norms are convex in t, so knots suffice
    f_norm = max(float((meas * np.linalg.norm(fk, axis=1) ** qc).sum()) ** (1.0 / qc)
                 for fk in model.body.f.values)
    g_norm = 0.0
    c_q = c_p = 0.0
    if mesh.surface_force_facets:
        ids = sorted(mesh.surface_force_facets)
        fm = np.array([mesh.facets[i].measure for i in ids])
        g_norm = max(float((fm * np.linalg.norm(gk, axis=1) ** rc).sum()) ** (1.0 / rc)
                     for gk in model.surface.g.values)
        for i in ids:
            f = mesh.facets[i]
            (e,) = f.adjacent_elements
            pts = mesh.vertices[mesh.elements[e]]
            diam = max(np.linalg.norm(a - b) for a in pts for b in pts)
            c_q += f.measure ** (1.0 / r) * meas[e] ** (-1.0 / q)
            c_p += f.measure ** (1.0 / r) * diam * meas[e] ** (-1.0 / p)

    A = model.bulk.a_min / p
    alpha1 = max(model.bulk.a_max / p, eps / q + 1.0 / q, 1.0 / r)
    beta1 = _young(f_norm, 1.0 / q, q) + _young(g_norm, 1.0 / r, r)

    if eps > 0:
        alpha0 = min(A / 2.0, 1.0 / (2.0 * q))
        beta0 = _young(f_norm + g_norm * c_q, eps / (2.0 * q), q) + _young(g_norm * c_p, A / 2.0, p)
        asserted = True
    else:
        alpha0 = A
        beta0 = 0.0
        asserted = f_norm == 0.0 and g_norm == 0.0
    return GrowthConstants(alpha0, beta0, alpha1, beta1, asserted)


def growth_bounds_check(model: FractureModel, t: float, u: Deformation,
                        constants: GrowthConstants | None = None) -> GrowthReport:
    c = constants or growth_constants(model)
    nrm = norms(u, model.bulk.p, model.body.q, model.surface.r)
    gp = nrm["Lp_grad"] ** model.bulk.p
    uq = nrm["Lq_bulk"] ** model.body.q
    sr = nrm["Lr_surface"] ** model.surface.r
    value = elastic_energy(model, t, u)
    lower = c.alpha0 * (gp + model.body.eps * uq) - c.beta0
    upper = c.alpha1 * (gp + uq + sr) + c.beta1
    return GrowthReport(value, lower, upper, c.lower_asserted)
