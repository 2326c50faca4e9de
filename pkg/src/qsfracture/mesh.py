"""Simplicial reference configurations with labelled boundary parts.

Two mesh families are supported: a 1D interval split into ``N`` segments and
a structured triangulation of a rectangle (every cell cut along its rising
diagonal).  Facets are points in 1D and edges in 2D.  Each mesh carries four
facet labels:

* ``dirichlet_facets``: boundary facets where the boundary deformation is
  prescribed,
* ``neumann_facets``: the remaining boundary facets,
* ``surface_force_facets``: the subset of Neumann facets loaded by surface
  forces,
* ``brittle_facets``: the facets a crack may occupy (interior facets and,
  optionally, Dirichlet facets, which model debonding).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

SIDES_1D = ("left", "right")
SIDES_2D = ("left", "right", "bottom", "top")

FacetSelector = Union[str, int, Callable[["Facet"], bool]]


class MeshError(ValueError):
    """Raised when a mesh specification is inconsistent."""


@dataclass(frozen=True, eq=False)
class Facet:
    index: int
    vertex_indices: tuple[int, ...]
    adjacent_elements: tuple[int, ...]
    midpoint: np.ndarray
    normal: np.ndarray
    measure: float
    sides: frozenset[str] = frozenset()

    @property
    def is_boundary(self) -> bool:
        return len(self.adjacent_elements) == 1


@dataclass(frozen=True)
class MeshSpec:
    """Recipe for :func:`build_mesh`.

    ``dirichlet`` and ``surface`` list boundary sides (``"left"``, ``"right"``,
    and in 2D ``"bottom"``, ``"top"``) or facet selectors; every boundary facet
    not selected as Dirichlet is Neumann.  ``brittle`` is a list of selectors:

    ``"interior"``        all interior facets
    ``"dirichlet"``       all Dirichlet facets
    ``"side:<name>"``     boundary facets on a side
    ``"box:x0,x1[,y0,y1]"`` interior facets whose midpoint lies in the box
    ``"facet:<i>"`` or an int   one facet
    a callable            ``Facet -> bool``
    """

    kind: str
    bounds: tuple[float, ...]
    cells: tuple[int, ...]
    dirichlet: tuple[FacetSelector, ...] = ()
    surface: tuple[FacetSelector, ...] = ()
    brittle: tuple[FacetSelector, ...] = ()

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    element_measures: np.ndarray
    shape_gradients: np.ndarray  # (n_elements, dim + 1, dim)
    facets: tuple[Facet, ...]
    element_facets: tuple[tuple[int, ...], ...]
    dirichlet_facets: frozenset[int]
    neumann_facets: frozenset[int]
    surface_force_facets: frozenset[int]
    brittle_facets: frozenset[int]
    spec: MeshSpec | None = field(default=None, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def boundary_facets(self) -> list[int]:
        return [f.index for f in self.facets if f.is_boundary]

    @property
    def interior_facets(self) -> list[int]:
        return [f.index for f in self.facets if not f.is_boundary]

    @property
    def volume(self) -> float:
        return float(self.element_measures.sum())

    def element_centroid(self, e: int) -> np.ndarray:
        return self.vertices[self.elements[e]].mean(axis=0)

    def vertex_facets(self, v: int) -> list[int]:
        return [f.index for f in self.facets if v in f.vertex_indices]


def _structured_topology(spec: MeshSpec):
    if spec.kind == "interval":
        (x0, x1), (n,) = spec.bounds, spec.cells
        if n < 1 or not x1 > x0:
            raise MeshError("interval needs at least one segment and x1 > x0")
        vertices = np.linspace(x0, x1, n + 1).reshape(-1, 1)
        elements = np.array([(i, i + 1) for i in range(n)], dtype=int)
        return vertices, elements
    if spec.kind == "rectangle":
        x0, x1, y0, y1 = spec.bounds
        nx, ny = spec.cells
        if nx < 1 or ny < 1 or not (x1 > x0 and y1 > y0):
            raise MeshError("rectangle needs positive cell counts and extents")
        xs = np.linspace(x0, x1, nx + 1)
        ys = np.linspace(y0, y1, ny + 1)
        vertices = np.array([(x, y) for y in ys for x in xs])
        elements = []
        for j in range(ny):
            for i in range(nx):
                v00 = j * (nx + 1) + i
                v10, v01 = v00 + 1, v00 + nx + 1
                v11 = v01 + 1
                elements.append((v00, v10, v11))
                elements.append((v00, v11, v01))
        return vertices, np.array(elements, dtype=int)
    raise MeshError(f"unknown mesh kind {spec.kind!r}")


def _shape_gradients(vertices: np.ndarray, elements: np.ndarray):
    dim = vertices.shape[1]
    grads = np.empty((len(elements), dim + 1, dim))
    measures = np.empty(len(elements))
    for e, simplex in enumerate(elements):
        # barycentric coordinates: [1 x] @ C = I
        mat = np.hstack([np.ones((dim + 1, 1)), vertices[simplex]])
        det = np.linalg.det(mat)
        measures[e] = abs(det) / (1.0 if dim == 1 else 2.0)
        grads[e] = np.linalg.inv(mat)[1:].T
    return grads, measures


def _build_facets(vertices, elements, bounds):
    dim = vertices.shape[1]
    owners: dict[tuple[int, ...], list[int]] = {}
    for e, simplex in enumerate(elements):
        for local in range(dim + 1):
            key = tuple(sorted(int(v) for k, v in enumerate(simplex) if k != local))
            owners.setdefault(key, []).append(e)
    keys = sorted(owners)
    centroids = np.array([vertices[s].mean(axis=0) for s in elements])
    facets = []
    tol = 1e-12 * max(1.0, float(np.abs(bounds).max()))
    for idx, key in enumerate(keys):
        adj = tuple(sorted(owners[key]))
        pts = vertices[list(key)]
        mid = pts.mean(axis=0)
        if dim == 1:
            normal = np.array([1.0])
            measure = 1.0
        else:
            tangent = pts[1] - pts[0]
            measure = float(np.linalg.norm(tangent))
            normal = np.array([tangent[1], -tangent[0]]) / measure
        ref = centroids[adj[1]] - centroids[adj[0]] if len(adj) == 2 else mid - centroids[adj[0]]
        if normal @ ref < 0:
            normal = -normal
        sides = set()
        if len(adj) == 1:
            names = SIDES_1D if dim == 1 else SIDES_2D
            coords = [(0, bounds[0]), (0, bounds[1])]
            if dim == 2:
                coords += [(1, bounds[2]), (1, bounds[3])]
            for name, (axis, value) in zip(names, coords):
                if np.all(np.abs(pts[:, axis] - value) <= tol):
                    sides.add(name)
        mid.setflags(write=False)
        normal.setflags(write=False)
        facets.append(Facet(idx, key, adj, mid, normal, measure, frozenset(sides)))
    element_facets = [[] for _ in elements]
    for f in facets:
        for e in f.adjacent_elements:
            element_facets[e].append(f.index)
    return tuple(facets), tuple(tuple(ids) for ids in element_facets)


def select_facets(facets: Sequence[Facet], selectors: Iterable[FacetSelector],
                  dirichlet: Iterable[int] = ()) -> set[int]:
    """Resolve facet selectors (see :class:`MeshSpec`) to facet indices."""
    dirichlet = set(dirichlet)
    chosen: set[int] = set()
    for sel in selectors:
        if callable(sel):
            chosen.update(f.index for f in facets if sel(f))
            continue
        if isinstance(sel, (int, np.integer)):
            idx = int(sel)
            if not 0 <= idx < len(facets):
                raise MeshError(f"facet index {idx} out of range")
            chosen.add(idx)
            continue
        token = str(sel).strip()
        if token in SIDES_2D:
            token = "side:" + token
        if token == "interior":
            chosen.update(f.index for f in facets if not f.is_boundary)
        elif token == "dirichlet":
            chosen.update(dirichlet)
        elif token == "all":
            chosen.update(f.index for f in facets if not f.is_boundary)
            chosen.update(dirichlet)
        elif token.startswith("side:"):
            name = token[5:]
            if name not in SIDES_2D:
                raise MeshError(f"unknown side {name!r}")
            chosen.update(f.index for f in facets if name in f.sides)
        elif token.startswith("box:"):
            box = [float(v) for v in token[4:].split(",")]
            lo, hi = np.array(box[0::2]), np.array(box[1::2])
            for f in facets:
                if not f.is_boundary and np.all(f.midpoint >= lo) and np.all(f.midpoint <= hi):
                    chosen.add(f.index)
        elif token.startswith("facet:"):
            chosen.update(select_facets(facets, [int(token[6:])]))
        else:
            raise MeshError(f"unknown facet selector {token!r}")
    return chosen


def build_mesh(spec: MeshSpec) -> Mesh:
    """Build and validate a mesh; raises :class:`MeshError` on any violation."""
    vertices, elements = _structured_topology(spec)
    grads, measures = _shape_gradients(vertices, elements)
    bounds = np.asarray(spec.bounds, dtype=float)
    facets, element_facets = _build_facets(vertices, elements, bounds)

    dirichlet = select_facets(facets, spec.dirichlet)
    boundary = {f.index for f in facets if f.is_boundary}
    if dirichlet - boundary:
        raise MeshError(f"Dirichlet label on interior facets {sorted(dirichlet - boundary)}")
    neumann = boundary - dirichlet
    surface = select_facets(facets, spec.surface)
    brittle = select_facets(facets, spec.brittle, dirichlet)

    for arr in (vertices, elements, grads, measures):
        arr.setflags(write=False)
    mesh = Mesh(
        dim=spec.dim,
        vertices=vertices,
        elements=elements,
        element_measures=measures,
        shape_gradients=grads,
        facets=facets,
        element_facets=element_facets,
        dirichlet_facets=frozenset(dirichlet),
        neumann_facets=frozenset(neumann),
        surface_force_facets=frozenset(surface),
        brittle_facets=frozenset(brittle),
        spec=spec,
    )
    problems = validate_partition(mesh)
    if problems:
        raise MeshError("; ".join(problems))
    return mesh


def validate_partition(mesh: Mesh) -> list[str]:
    """Return human-readable descriptions of every violated mesh invariant."""
    out: list[str] = []
    n_f = mesh.n_facets
    for name in ("dirichlet_facets", "neumann_facets", "surface_force_facets", "brittle_facets"):
        bad = sorted(i for i in getattr(mesh, name) if not 0 <= i < n_f)
        if bad:
            out.append(f"{name} references unknown facets {bad}")

    for f in mesh.facets:
        n_adj = len(f.adjacent_elements)
        if n_adj not in (1, 2):
            out.append(f"facet {f.index} has {n_adj} adjacent elements")
        in_d = f.index in mesh.dirichlet_facets
        in_n = f.index in mesh.neumann_facets
        if f.is_boundary:
            if in_d and in_n:
                out.append(f"facet {f.index} is labelled both Dirichlet and Neumann")
            elif not (in_d or in_n):
                out.append(f"boundary facet {f.index} is neither Dirichlet nor Neumann")
        elif in_d or in_n:
            out.append(f"interior facet {f.index} carries a boundary label")
        if not f.measure > 0:
            out.append(f"facet {f.index} has non-positive measure {f.measure}")
        if abs(np.linalg.norm(f.normal) - 1.0) > 1e-12:
            out.append(f"facet {f.index} normal is not a unit vector")

    for i in sorted(mesh.surface_force_facets - mesh.neumann_facets):
        out.append(f"surface-force facet {i} is not a Neumann facet")
    for i in sorted(mesh.brittle_facets & mesh.neumann_facets):
        out.append(f"brittle facet {i} lies on the Neumann boundary")

    near_brittle: dict[int, int] = {}
    for i in sorted(mesh.brittle_facets):
        if 0 <= i < n_f:
            for e in mesh.facets[i].adjacent_elements:
                near_brittle.setdefault(e, i)
    for s in sorted(mesh.surface_force_facets):
        if not 0 <= s < n_f:
            continue
        for e in mesh.facets[s].adjacent_elements:
            if e in near_brittle:
                out.append(
                    f"separation violated: element {e} touches brittle facet "
                    f"{near_brittle[e]} and surface-force facet {s}"
                )
    return out
