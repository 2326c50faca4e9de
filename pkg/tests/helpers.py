"""Scenario builders shared by the test modules."""

import numpy as np

from qsfracture.energy import (BodyForceModel, BulkModel, FractureModel, SurfaceForceModel,
                               ToughnessModel)
from qsfracture.mesh import MeshSpec, build_mesh
from qsfracture.signals import Trajectory


def bar_mesh(n=4, brittle=("interior", "right")):
    return build_mesh(MeshSpec("interval", (0.0, 1.0), (n,), ("left", "right"), (), brittle))


def bar_model(kc=1.0, n=4, T=2.0, a=2.0, p=2.0):
    """u(0) = 0, u(1) = t; every facet except x = 0 brittle."""
    mesh = bar_mesh(n)
    psi = Trajectory.ramp(np.zeros((n + 1, 1)), T * mesh.vertices, T)
    return FractureModel.simple(mesh, BulkModel.uniform(mesh, a, p),
                                ToughnessModel.isotropic(mesh, kc), psi)


def pulled_plate(cells=(4, 1), bounds=(0.0, 2.0, 0.0, 1.0), brittle=("interior",), kc=0.5,
                 T=2.0, p=2.0, a=2.0, toughness=None, body=None, surface=None, surface_sides=(),
                 dirichlet=("left", "right"), m=1):
    """Scalar (or m-component) plate, psi(t, x) = t * x on every component."""
    mesh = build_mesh(MeshSpec("rectangle", bounds, cells, dirichlet, surface_sides, brittle))
    rate = np.repeat(mesh.vertices[:, :1], m, axis=1)
    psi = Trajectory.ramp(np.zeros_like(rate), T * rate, T)
    tough = toughness(mesh) if toughness else ToughnessModel.isotropic(mesh, kc)
    b = body(mesh, T) if body else None
    s = surface(mesh, T) if surface else None
    return FractureModel.simple(mesh, BulkModel.uniform(mesh, a, p), tough, psi, m, b, s)


def static_plate(crack_facets=(), cells=(2, 2)):
    mesh = build_mesh(MeshSpec("rectangle", (0.0, 1.0, 0.0, 1.0), cells, ("left",), (),
                               ("interior",)))
    psi = Trajectory.constant(np.zeros((mesh.n_vertices, 1)), 1.0)
    return FractureModel.simple(mesh, BulkModel.uniform(mesh, 1.0),
                                ToughnessModel.isotropic(mesh, 0.3), psi)


def random_body(mesh, T, scale=1.0, eps=0.0, q=2.0, seed=0, m=1):
    rng = np.random.default_rng(seed)
    f = Trajectory(np.array([0.0, 0.5 * T, T]), rng.normal(scale=scale, size=(3, mesh.n_elements, m)))
    return BodyForceModel(f, eps, q)


def random_surface(mesh, T, scale=1.0, r=2.0, seed=1, m=1):
    rng = np.random.default_rng(seed)
    n = len(mesh.surface_force_facets)
    return SurfaceForceModel(Trajectory(np.array([0.0, T]), rng.normal(scale=scale, size=(2, n, m))), r)
