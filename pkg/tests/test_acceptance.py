"""Acceptance criteria 1-10.  Each test records a PASS/FAIL line (see conftest)."""

import functools
import time
import warnings

import numpy as np

from conftest import CRITERIA
from qsfracture.driver import (EvolutionWarning, TimeGrid, convergence_study, energy_audit,
                               run_evolution)
from qsfracture.energy import (BodyForceModel, ToughnessModel, body_diff_pairing, body_work,
                               bulk_differential_pairing, bulk_energy, crack_energy,
                               surface_diff_pairing, surface_work)
from qsfracture.mesh import MeshSpec, build_mesh
from qsfracture.sbv import CrackState, Deformation, assemble_dof_map
from qsfracture.signals import (STEP_BATTERY, Trajectory, best_shift, riemann_defect,
                                uniform_subdivision)
from qsfracture.solver import SingularSystemError, SolveSettings, euler_residual, solve_elastic

from helpers import bar_model, pulled_plate, random_body, random_surface, static_plate

# every evolution produced here; criterion 2 audits all of them
RUNS = []


def criterion(n):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper():
            try:
                detail = fn() or ""
            except BaseException as exc:
                msg = str(exc).strip().splitlines()[0][:160] if str(exc).strip() else ""
                CRITERIA[n] = (False, f"{type(exc).__name__}: {msg}")
                print(f"criterion {n}: FAIL")
                raise
            CRITERIA[n] = (True, detail)
            print(f"criterion {n}: PASS  {detail}")
        return wrapper
    return deco


def _run(model, grid, settings=None, initial_crack=None):
    trace = run_evolution(model, grid, settings, initial_crack)
    RUNS.append(trace)
    return trace


@criterion(1)
def test_criterion_1_bar_nucleation():
    T, N = 2.0, 200
    delta = T / N
    worst, slowest = 0.0, 0.0
    for kc in (0.25, 1.0, 2.0):
        t0 = time.perf_counter()
        trace = _run(bar_model(kc=kc, T=T), TimeGrid.uniform(T, N))
        slowest = max(slowest, time.perf_counter() - t0)
        t_star = np.sqrt(kc)
        (i_nuc,) = trace.nucleation_steps()
        t_nuc = trace.steps[i_nuc].t
        assert t_star - 1e-12 <= t_nuc <= t_star + delta + 1e-12, (kc, t_nuc)
        for s in trace.steps:
            if s.index != i_nuc:
                err = abs(s.energy.total - min(s.t ** 2, kc))
                worst = max(worst, err)
                assert err <= 1e-8, (kc, s.t, s.energy.total)
    assert slowest < 1.0, f"slowest run {slowest:.2f} s"
    return f"max |E - min(t^2, kc)| = {worst:.1e}, slowest run {slowest:.2f} s"


@criterion(3)
def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()

    def per_facet(mesh):
        return ToughnessModel.isotropic(mesh, np.random.default_rng(3).uniform(0.3, 0.8, mesh.n_facets))

    def aniso(mesh):
        return ToughnessModel.anisotropic(mesh, np.array([[0.6, 0.2], [0.2, 0.4]]))

    def graded_body(mesh, T):
        f = np.linspace(-1.0, 1.0, mesh.n_elements)[:, None]
        return BodyForceModel(Trajectory.ramp(np.zeros_like(f), f, T), eps=0.3, q=4.0)

    scripted = {
        "uniform k": pulled_plate(),
        "per-facet k": pulled_plate(toughness=per_facet),
        "anisotropic": pulled_plate(toughness=aniso),
        "p = 4": pulled_plate(p=4.0, kc=0.3),
        "body force, eps > 0": pulled_plate(body=graded_body, kc=0.4),
    }
    cracked = 0
    for name, model in scripted.items():
        assert len(model.mesh.brittle_facets) <= 12
        grid = TimeGrid.uniform(model.T, 20)
        ex = _run(model, grid)
        gr = _run(model, grid, SolveSettings(strategy="greedy"))
        for a, b in zip(ex.steps, gr.steps):
            assert a.crack == b.crack, (name, a.t, a.crack.sorted(), b.crack.sorted())
            assert abs(a.energy.total - b.energy.total) <= 1e-9, (name, a.t)
        cracked += bool(ex.steps[-1].crack.facets)
    assert cracked == len(scripted)  # every scenario actually fractures

    # adversarial: a crack that only pays off when two facets open together
    adversarial = [
        pulled_plate(cells=(2, 2), bounds=(0, 1, 0, 1), brittle=("box:0.49,0.51,0,1",), kc=0.5),
        pulled_plate(cells=(4, 2), toughness=per_facet, brittle=("box:0.4,1.6,0,1",)),
    ]
    for model in adversarial:
        grid = TimeGrid.uniform(model.T, 20)
        ex = _run(model, grid)
        gr = _run(model, grid, SolveSettings(strategy="greedy"))
        differ = [(a, b) for a, b in zip(ex.steps, gr.steps) if a.crack != b.crack]
        assert differ
        for a, b in differ:
            assert a.energy.total < b.energy.total, (a.t, a.energy.total, b.energy.total)
    elapsed = time.perf_counter() - t0
    assert elapsed < 120
    return f"5 scripted + 2 adversarial scenarios, {elapsed:.1f} s"


@criterion(4)
def test_criterion_4_energy_balance_rate():
    t0 = time.perf_counter()
    model = bar_model(kc=1.0)
    defects = []
    for j in range(5):
        trace = _run(model, TimeGrid.uniform(model.T, 20 * 2 ** j))
        defects.append(energy_audit(trace).defect_excluding(trace.nucleation_steps()))
    ratios = np.array(defects[:-1]) / np.array(defects[1:])
    assert np.all(ratios >= 1.8), ratios
    elapsed = time.perf_counter() - t0
    assert elapsed < 10
    return f"ratios {np.round(ratios, 3).tolist()}, {elapsed:.1f} s"


@criterion(5)
def test_criterion_5_grid_convergence():
    t0 = time.perf_counter()
    kc = 1.0
    t_star = np.sqrt(kc)
    model = bar_model(kc=kc)
    probes = (0.5 * t_star, 0.9 * t_star, 1.5 * t_star)
    rep = convergence_study(model, 20, 3, probes)
    RUNS.extend(rep.traces)
    C = 2.0 * t_star  # |t_i^2 - t^2| <= 2 t delta before nucleation
    for j, delta in enumerate(rep.deltas):
        assert delta < t_star
        for k, t in enumerate(probes):
            elastic_exact = t * t if t < t_star else 0.0
            assert abs(rep.elastic[j, k] - elastic_exact) <= C * delta, (delta, t, rep.elastic[j, k])
            total = rep.traces[j].state_at(t).energy.total
            assert abs(total - min(t * t, kc)) <= C * delta
        assert crack_energy(model.toughness, rep.traces[j].steps[-1].crack) == kc
    d = np.array(rep.theta_l1_diffs)
    assert len(d) == 3 and np.all(d[1:] < d[:-1]), d
    elapsed = time.perf_counter() - t0
    assert elapsed < 30
    return f"theta L1 diffs {np.round(d, 5).tolist()}, {elapsed:.1f} s"


@criterion(6)
def test_criterion_6_euler_residual():
    rng = np.random.default_rng(6)
    settings = SolveSettings()
    cases = [
        pulled_plate(cells=(3, 2)),
        pulled_plate(cells=(3, 2), p=4.0),
        pulled_plate(cells=(3, 2), p=3.0, m=2),
        pulled_plate(cells=(3, 3), bounds=(0, 1.5, 0, 1.5), brittle=("box:0.3,1.2,0,0.6",),
                     surface_sides=("top",),
                     body=lambda mesh, T: random_body(mesh, T, eps=0.4, q=4.0),
                     surface=lambda mesh, T: random_surface(mesh, T)),
    ]
    n_solves = 0
    for model in cases:
        tol = settings.tol_for(model)
        brittle = sorted(model.mesh.brittle_facets)
        for _ in range(6):
            crack = CrackState(f for f in brittle if rng.random() < 0.3)
            t = rng.uniform(0.1, model.T)
            try:
                u = solve_elastic(model, t, crack, settings)
            except SingularSystemError:
                continue  # an unbalanced floating piece is rejected, not solved
            n_solves += 1
            assert euler_residual(model, t, u) <= tol
    assert n_solves >= 16
    # perturbations
    model = pulled_plate(cells=(3, 2), p=4.0)
    tol = settings.tol_for(model)
    u = solve_elastic(model, 1.2, CrackState(), settings)
    free = ~u.dof_map.pinned
    raised = 0
    for _ in range(100):
        vals = np.array(u.values)
        vals[free] += 1e-3 * rng.normal(size=(free.sum(), model.m))
        raised += euler_residual(model, 1.2, Deformation(u.dof_map, vals)) > 10 * tol
    assert raised == 100
    return f"{n_solves} solves within tolerance, 100/100 perturbations detected"


def _rand(dm, rng, m):
    return Deformation(dm, rng.normal(size=(dm.n_nodes, m)))


@criterion(7)
def test_criterion_7_differential_consistency():
    rng = np.random.default_rng(7)
    model = pulled_plate(cells=(3, 3), bounds=(0, 1.5, 0, 1.5), brittle=("box:0.3,1.2,0,0.6",),
                         surface_sides=("top",), p=4.0, m=2,
                         body=lambda mesh, T: random_body(mesh, T, eps=0.5, q=4.0, m=2),
                         surface=lambda mesh, T: random_surface(mesh, T, m=2))
    h = 1e-5
    brittle = sorted(model.mesh.brittle_facets)
    worst = {"bulk": 0.0, "body": 0.0, "surface": 0.0}
    for _ in range(50):
        crack = CrackState(f for f in brittle if rng.random() < 0.4)
        dm = assemble_dof_map(model.mesh, crack, model.m)
        u, v = _rand(dm, rng, model.m), _rand(dm, rng, model.m)
        t = rng.uniform(0, model.T)
        checks = {
            "bulk": (bulk_differential_pairing(model.bulk, u, v),
                     lambda w: bulk_energy(model.bulk, w)),
            "body": (body_diff_pairing(model.body, t, u, v), lambda w: body_work(model.body, t, w)),
            "surface": (surface_diff_pairing(model.surface, t, u, v),
                        lambda w: surface_work(model.surface, t, w)),
        }
        for name, (pairing, energy) in checks.items():
            fd = (energy(u + v * h) - energy(u - v * h)) / (2 * h)
            rel = abs(pairing - fd) / max(abs(pairing), abs(fd))
            worst[name] = max(worst[name], rel)
    assert max(worst.values()) <= 1e-5, worst
    return "worst rel. error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


@criterion(8)
def test_criterion_8_toughness_norm():
    rng = np.random.default_rng(8)
    mesh = build_mesh(MeshSpec("rectangle", (0.0, 1.0, 0.0, 1.0), (3, 3), ("left",), ("right",),
                               ("box:0,0.7,0,1",)))
    L = rng.normal(size=(mesh.n_facets, 2, 2))
    models = [ToughnessModel.isotropic(mesh, rng.uniform(0.2, 2.0, mesh.n_facets)),
              ToughnessModel.anisotropic(mesh, L @ L.transpose(0, 2, 1) + 0.1 * np.eye(2))]
    brittle = sorted(mesh.brittle_facets)
    for tough in models:
        for _ in range(1000):
            f = int(rng.choice(brittle))
            n1, n2 = rng.normal(size=2), rng.normal(size=2)
            lam = rng.normal() * 3
            k1, k2 = tough.kappa(f, n1), tough.kappa(f, n2)
            assert abs(tough.kappa(f, lam * n1) - abs(lam) * k1) <= 1e-12 * max(1.0, abs(lam) * k1)
            assert tough.kappa(f, n1 + n2) <= k1 + k2 + 1e-12
            assert k1 > 0
        for _ in range(200):
            small = CrackState(g for g in brittle if rng.random() < 0.3)
            big = small | [g for g in brittle if rng.random() < 0.3]
            assert crack_energy(tough, small) <= crack_energy(tough, big)
            # Neumann facets never enter the brittle set, and cost nothing if listed
            assert not (mesh.neumann_facets & mesh.brittle_facets)
            with_neumann = set(small.facets) | set(mesh.neumann_facets)
            assert crack_energy(tough, with_neumann) == crack_energy(tough, small)
    return "norm axioms on 2 x 1000 pairs, monotone K, Neumann invariance"


@criterion(9)
def test_criterion_9_riemann():
    t0 = time.perf_counter()
    res = riemann_defect(lambda t: t, uniform_subdivision(4, 0.0, 1.0))
    assert res.riemann_sum == 0.625
    shifts = np.random.default_rng(0).uniform(0.0, 1.0, 64)
    fs = [f for f, _ in STEP_BATTERY]
    Fs = [F for _, F in STEP_BATTERY]
    best = [best_shift(fs, m, 0.0, 1.0, shifts, Fs).best_defect for m in (8, 16, 32, 64)]
    assert all(b <= a for a, b in zip(best[:-1], best[1:])), best
    assert best[-1] <= 0.25 * best[0], best
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    return f"best defects {[f'{b:.4f}' for b in best]}, {elapsed:.2f} s"


@criterion(10)
def test_criterion_10_static_invariance():
    rng = np.random.default_rng(10)
    model = static_plate(cells=(3, 3))
    brittle = sorted(model.mesh.brittle_facets)
    grid = TimeGrid.uniform(model.T, 6)
    for trial in range(8):
        gamma0 = CrackState(f for f in brittle if rng.random() < 0.25 * (trial % 4))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EvolutionWarning)  # isolated pieces are expected
            trace = _run(model, grid, SolveSettings(exhaustive_cap=24), gamma0)
        K0 = crack_energy(model.toughness, gamma0)
        for s in trace.steps:
            assert s.crack == gamma0
            assert np.all(s.u.values == 0.0)
            assert s.energy.total == K0
    return "8 random initial cracks, exact"


@criterion(2)
def test_criterion_2_competitor_gap():
    # runs last in file order so that RUNS holds every evolution above
    if len(RUNS) < 20:
        for model in (bar_model(), pulled_plate(), static_plate()):
            _run(model, TimeGrid.uniform(model.T, 10))
    worst = min(s.competitor_gap for tr in RUNS for s in tr.steps[1:])
    n_steps = sum(len(tr.steps) - 1 for tr in RUNS)
    assert worst >= -1e-12, worst
    return f"{len(RUNS)} runs, {n_steps} steps, min gap {worst:.2e}"
