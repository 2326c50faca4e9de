"""Piecewise-affine deformations that may jump across cracked facets.

Every element stores its own nodal values; nodes of neighbouring elements are
tied to a single degree of freedom unless a crack separates them.  Jumps off
the crack are therefore exactly zero by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True)
class CrackState:
    """A crack: a set of brittle facet indices."""

    facets: frozenset[int] = frozenset()

    def __init__(self, facets: Iterable[int] = ()):
        object.__setattr__(self, "facets", frozenset(int(f) for f in facets))

    def __or__(self, other: "CrackState | Iterable[int]") -> "CrackState":
        extra = other.facets if isinstance(other, CrackState) else other
        return CrackState(self.facets | frozenset(extra))

    def __le__(self, other: "CrackState") -> bool:
        return self.facets <= other.facets

    def __contains__(self, facet: int) -> bool:
        return facet in self.facets

    def __len__(self) -> int:
        return len(self.facets)

    def __iter__(self):
        return iter(sorted(self.facets))

    def sorted(self) -> list[int]:
        return sorted(self.facets)

    def validate(self, mesh: Mesh) -> None:
        stray = self.facets - mesh.brittle_facets
        if stray:
            raise ValueError(f"crack facets {sorted(stray)} are not brittle")


@dataclass(frozen=True, eq=False)
class DofMap:
    """Element-local node -> global node tying for one crack.

    ``node_of[e, a]`` is the node carrying local vertex ``a`` of element
    ``e``; each node holds ``m`` components (dof id ``node * m + c``).
    """

    mesh: Mesh
    crack: CrackState
    m: int
    node_of: np.ndarray
    node_vertex: np.ndarray
    pinned: np.ndarray  # bool per node: lies on an uncracked Dirichlet facet

    @property
    def n_nodes(self) -> int:
        return len(self.node_vertex)

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.m

    def dof_ids(self) -> np.ndarray:
        """(n_elements, n_local * m) global dof ids in element-local order."""
        m = self.m
        ids = self.node_of[:, :, None] * m + np.arange(m)[None, None, :]
        return ids.reshape(len(self.node_of), -1)


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def assemble_dof_map(mesh: Mesh, crack: CrackState, m: int = 1) -> DofMap:
    """Tie element-local nodes through uncracked interior facets."""
    crack.validate(mesh)
    n_loc = mesh.dim + 1
    elements = mesh.elements
    parent = list(range(mesh.n_elements * n_loc))
    local_pos = [{int(v): a for a, v in enumerate(simplex)} for simplex in elements]

    for f in mesh.facets:
        if f.is_boundary or f.index in crack.facets:
            continue
        e1, e2 = f.adjacent_elements
        for v in f.vertex_indices:
            r1 = _find(parent, e1 * n_loc + local_pos[e1][v])
            r2 = _find(parent, e2 * n_loc + local_pos[e2][v])
            if r1 != r2:
                parent[max(r1, r2)] = min(r1, r2)

    roots = [_find(parent, i) for i in range(len(parent))]
    flat_vertex = elements.reshape(-1)
    # order nodes by vertex, then by first local slot, so that an uncracked
    # mesh numbers nodes exactly like vertices
    order = sorted(set(roots), key=lambda r: (int(flat_vertex[r]), r))
    number = {r: k for k, r in enumerate(order)}
    node_of = np.array([number[r] for r in roots], dtype=int).reshape(mesh.n_elements, n_loc)
    node_vertex = np.array([int(flat_vertex[r]) for r in order], dtype=int)

    pinned = np.zeros(len(order), dtype=bool)
    for fi in mesh.dirichlet_facets - crack.facets:
        f = mesh.facets[fi]
        (e,) = f.adjacent_elements
        for v in f.vertex_indices:
            pinned[node_of[e, local_pos[e][v]]] = True

    for arr in (node_of, node_vertex, pinned):
        arr.setflags(write=False)
    return DofMap(mesh, crack, m, node_of, node_vertex, pinned)


@dataclass(frozen=True, eq=False)
class Deformation:
    dof_map: DofMap
    values: np.ndarray  # (n_nodes, m)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.dof_map.n_nodes, self.dof_map.m)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def mesh(self) -> Mesh:
        return self.dof_map.mesh

    @property
    def crack(self) -> CrackState:
        return self.dof_map.crack

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def element_values(self) -> np.ndarray:
        """(n_elements, dim + 1, m) nodal values per element."""
        return self.values[self.dof_map.node_of]

    def gradients(self) -> np.ndarray:
        """(n_elements, m, dim) constant element gradients."""
        return np.einsum("eac,ead->ecd", self.element_values(), self.mesh.shape_gradients)

    def with_values(self, values: np.ndarray) -> "Deformation":
        return Deformation(self.dof_map, values)

    def __add__(self, other: "Deformation") -> "Deformation":
        if other.dof_map is not self.dof_map:
            other = retie(other, self.dof_map)
        return Deformation(self.dof_map, self.values + other.values)

    def __sub__(self, other: "Deformation") -> "Deformation":
        if other.dof_map is not self.dof_map:
            other = retie(other, self.dof_map)
        return Deformation(self.dof_map, self.values - other.values)

    def __mul__(self, c: float) -> "Deformation":
        return Deformation(self.dof_map, self.values * c)

    __rmul__ = __mul__


def zero(dof_map: DofMap) -> Deformation:
    return Deformation(dof_map, np.zeros((dof_map.n_nodes, dof_map.m)))


def interpolate(dof_map: DofMap, vertex_values: np.ndarray) -> Deformation:
    """Continuous P1 field given by vertex values, expressed on ``dof_map``."""
    vals = np.asarray(vertex_values, dtype=float).reshape(dof_map.mesh.n_vertices, dof_map.m)
    return Deformation(dof_map, vals[dof_map.node_vertex])


def interpolate_function(dof_map: DofMap, func) -> Deformation:
    vals = np.array([np.atleast_1d(func(x)) for x in dof_map.mesh.vertices], dtype=float)
    return interpolate(dof_map, vals)


def retie(u: Deformation, target: DofMap) -> Deformation:
    """Express ``u`` on ``target``, whose crack must contain ``u``'s crack.

    Element-wise values are preserved exactly.
    """
    if not u.crack <= target.crack:
        raise ValueError("target crack must contain the deformation's crack")
    vals = np.empty((target.n_nodes, target.m))
    vals[target.node_of.reshape(-1)] = u.values[u.dof_map.node_of.reshape(-1)]
    return Deformation(target, vals)


def gradient(u: Deformation, element_id: int) -> np.ndarray:
    """(m, dim) gradient of ``u`` on one element."""
    vals = u.values[u.dof_map.node_of[element_id]]
    return vals.T @ u.mesh.shape_gradients[element_id]


def facet_traces(u: Deformation, facet_id: int) -> dict[int, np.ndarray]:
    """Nodal trace values of ``u`` on a facet from each adjacent element."""
    mesh = u.mesh
    f = mesh.facets[facet_id]
    out = {}
    for e in f.adjacent_elements:
        simplex = list(mesh.elements[e])
        out[e] = np.array([u.values[u.dof_map.node_of[e, simplex.index(v)]] for v in f.vertex_indices])
    return out


def jump(u: Deformation, facet_id: int, psi_vertex_values: np.ndarray | None = None) -> np.ndarray:
    """Mean jump ``u+ - u-`` across a facet, ``+`` being the side the normal points to.

    On a Dirichlet facet the exterior value is the boundary datum, so the
    jump is ``psi - u``.
    """
    mesh = u.mesh
    f = mesh.facets[facet_id]
    traces = facet_traces(u, facet_id)
    if not f.is_boundary:
        lo, hi = f.adjacent_elements
        return (traces[hi] - traces[lo]).mean(axis=0)
    if facet_id not in mesh.dirichlet_facets:
        raise ValueError(f"facet {facet_id} is on the Neumann boundary: no exterior value")
    if psi_vertex_values is None:
        raise ValueError("a Dirichlet jump needs the boundary datum")
    psi = np.asarray(psi_vertex_values, dtype=float).reshape(mesh.n_vertices, -1)
    (e,) = f.adjacent_elements
    return (psi[list(f.vertex_indices)] - traces[e]).mean(axis=0)


def jump_set(u: Deformation) -> set[int]:
    """Interior facets where ``u`` visibly jumps (diagnostic only)."""
    tol = 1e-12 * (1.0 + float(np.abs(u.values).max(initial=0.0)))
    return {
        f.index for f in u.mesh.facets
        if not f.is_boundary and np.abs(jump(u, f.index)).max() > tol
    }


def apply_dirichlet(u: Deformation, psi_vertex_values: np.ndarray,
                    crack: CrackState | None = None) -> Deformation:
    """Pin the nodes of uncracked Dirichlet facets to the boundary datum."""
    dm = u.dof_map
    if crack is not None and crack != dm.crack:
        raise ValueError("crack does not match the deformation's dof map")
    psi = np.asarray(psi_vertex_values, dtype=float).reshape(dm.mesh.n_vertices, dm.m)
    vals = np.array(u.values)
    vals[dm.pinned] = psi[dm.node_vertex[dm.pinned]]
    return Deformation(dm, vals)


# -- quadrature ---------------------------------------------------------------

@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points and weights (summing to 1) exact for ``degree``.

    The triangle rule is a collapsed tensor Gauss-Legendre rule.
    """
    if dim == 1:
        k = max(1, math.ceil((degree + 1) / 2))
        x, w = np.polynomial.legendre.leggauss(k)
        s = 0.5 * (x + 1.0)
        return np.column_stack([1.0 - s, s]), 0.5 * w
    k = max(1, math.ceil((degree + 2) / 2))
    x, w = np.polynomial.legendre.leggauss(k)
    s, ws = 0.5 * (x + 1.0), 0.5 * w
    pts, wts = [], []
    for xi, wi in zip(s, ws):
        for eta, wj in zip(s, ws):
            a, b = xi, (1.0 - xi) * eta
            pts.append((1.0 - a - b, a, b))
            wts.append(2.0 * wi * wj * (1.0 - xi))
    return np.array(pts), np.array(wts)


def _fractional_rule(dim: int) -> tuple[np.ndarray, np.ndarray]:
    if dim == 1:
        return simplex_rule(1, 5)
    a, b = 1.0 / 6.0, 2.0 / 3.0
    pts = np.array([(b, a, a), (a, b, a), (a, a, b)])
    return pts, np.full(3, 1.0 / 3.0)


def power_rule(dim: int, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    """Rule for integrating ``|u|^exponent`` of an affine ``u``.

    Exact when the exponent is an even integer; a fixed 3-point Gauss rule
    otherwise.
    """
    if float(exponent).is_integer() and int(exponent) % 2 == 0:
        return simplex_rule(dim, int(exponent))
    return _fractional_rule(dim)


def facet_rule(dim: int, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    """Rule on a facet, in barycentric coordinates of the facet vertices."""
    if dim == 1:
        return np.ones((1, 1)), np.ones(1)
    return power_rule(1, exponent)


def bulk_point_values(u: Deformation, bary: np.ndarray) -> np.ndarray:
    """(n_elements, n_points, m) values at barycentric points."""
    return np.einsum("ka,eac->ekc", bary, u.element_values())


def surface_trace_values(u: Deformation, facets: Iterable[int], bary: np.ndarray):
    """Trace values on facets at facet-barycentric points.

    Returns ``(facet_ids, values (n_f, n_points, m), local (n_f, dim) local
    node slots, elements)``.
    """
    mesh = u.mesh
    ids = sorted(facets)
    vals = np.zeros((len(ids), len(bary), u.dof_map.m))
    slots = np.zeros((len(ids), mesh.dim), dtype=int)
    elems = np.zeros(len(ids), dtype=int)
    for k, fi in enumerate(ids):
        f = mesh.facets[fi]
        e = f.adjacent_elements[0]
        simplex = list(mesh.elements[e])
        slots[k] = [simplex.index(v) for v in f.vertex_indices]
        elems[k] = e
        nodal = u.values[u.dof_map.node_of[e, slots[k]]]
        vals[k] = bary @ nodal
    return ids, vals, slots, elems


def norms(u: Deformation, p: float = 2.0, q: float = 2.0, r: float = 2.0,
          surface_facets: Iterable[int] | None = None) -> dict[str, float]:
    """``{"Lp_grad", "Lq_bulk", "Lr_surface"}`` norms of ``u``."""
    mesh = u.mesh
    meas = mesh.element_measures
    g = np.linalg.norm(u.gradients().reshape(mesh.n_elements, -1), axis=1)
    lp_grad = float((meas * g ** p).sum()) ** (1.0 / p)

    bary, w = power_rule(mesh.dim, q)
    vals = np.linalg.norm(bulk_point_values(u, bary), axis=2)
    lq = float((meas[:, None] * w[None, :] * vals ** q).sum()) ** (1.0 / q)

    facets = mesh.surface_force_facets if surface_facets is None else surface_facets
    lr = 0.0
    if facets:
        fb, fw = facet_rule(mesh.dim, r)
        ids, tv, _, _ = surface_trace_values(u, facets, fb)
        fmeas = np.array([mesh.facets[i].measure for i in ids])
        lr = float((fmeas[:, None] * fw[None, :] * np.linalg.norm(tv, axis=2) ** r).sum()) ** (1.0 / r)
    return {"Lp_grad": lp_grad, "Lq_bulk": lq, "Lr_surface": lr}
