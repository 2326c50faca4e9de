"""Scenario files and trace persistence.

A scenario is a line-oriented text file::

    # qsfracture scenario v1
    [mesh]
    kind = interval
    bounds = 0 1
    cells = 4
    dirichlet = left right
    brittle = interior right

    [bulk]
    p = 2
    a = 2

    [toughness]
    mode = isotropic
    k = 1

    [boundary]
    linear_rate = 1          # psi(t, x) = t * (offset + B x), B row-major (m, n)

    [time]
    T = 2
    steps = 200

Field snapshots are given as ``knot <t> =`` followed by whitespace-separated
rows (one row per vertex, element or facet, ``m`` columns), or inline after
the ``=``.  ``#`` starts a comment.  Numbers always use a decimal point.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .driver import AuditReport, ConvergenceReport, EvolutionTrace, TimeGrid, TraceStep
from .energy import (BodyForceModel, BulkModel, EnergyBreakdown, FractureModel,
                     SurfaceForceModel, ToughnessModel)
from .mesh import MeshError, MeshSpec, build_mesh
from .sbv import CrackState, Deformation
from .signals import Trajectory
from .solver import SolveSettings, dof_map_for

SCENARIO_HEADER = "# qsfracture scenario v1"
TRACE_HEADER = "# qsfracture trace v1"
FORMAT_VERSION = 1

SECTIONS = {
    "mesh": {"kind", "bounds", "cells", "dirichlet", "surface", "brittle"},
    "bulk": {"p", "a", "stiffness"},
    "toughness": {"mode", "k", "A"},
    "body_force": {"eps", "q", "knot"},
    "surface_force": {"r", "knot"},
    "boundary": {"components", "knot", "linear_rate", "linear_offset"},
    "initial": {"crack", "u0"},
    "time": {"T", "steps", "points", "shifted"},
    "settings": {f.name for f in fields(SolveSettings)},
}
REPEATABLE = {"knot"}
REQUIRED = ("mesh", "bulk", "toughness", "time")


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class _Entry:
    key: str
    arg: str  # text between key and "=" (knot time)
    tokens: list[str]
    rows: list[list[str]]
    line: int

    def values(self) -> list[str]:
        return self.tokens + [tok for row in self.rows for tok in row]


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _tokenize(text: str) -> dict[str, list[_Entry]]:
    sections: dict[str, list[_Entry]] = {}
    header_seen = False
    current: list[_Entry] | None = None
    name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not header_seen and raw.strip().startswith("# qsfracture scenario"):
            header_seen = True
            if raw.strip() != SCENARIO_HEADER:
                raise ScenarioError(f"unsupported format version {raw.strip()!r}", lineno)
            continue
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"malformed section header {line!r}", lineno)
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ScenarioError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise ScenarioError(f"duplicate section [{name}]", lineno)
            current = sections[name] = []
            continue
        if current is None:
            raise ScenarioError("content before the first section", lineno)
        if "=" not in line:
            toks = line.split()
            if current and all(_is_number(t) for t in toks):
                current[-1].rows.append(toks)
                continue
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        lhs, rhs = line.split("=", 1)
        head = lhs.split()
        if not head:
            raise ScenarioError("missing key", lineno)
        key, arg = head[0], " ".join(head[1:])
        if key not in SECTIONS[name]:
            raise ScenarioError(f"unknown key {key!r} in [{name}]", lineno)
        if key not in REPEATABLE and any(e.key == key for e in current):
            raise ScenarioError(f"duplicate key {key!r} in [{name}]", lineno)
        current.append(_Entry(key, arg, rhs.split(), [], lineno))
    for req in REQUIRED:
        if req not in sections:
            raise ScenarioError(f"missing section [{req}]")
    return sections


def _get(entries: list[_Entry], key: str) -> _Entry | None:
    return next((e for e in entries if e.key == key), None)


def _floats(e: _Entry, count: int | None = None) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in e.values()], dtype=float)
    except ValueError as exc:
        raise ScenarioError(f"{e.key}: {exc}", e.line) from None
    if not np.all(np.isfinite(vals)):
        raise ScenarioError(f"{e.key}: non-finite value", e.line)
    if count is not None and len(vals) != count:
        raise ScenarioError(f"{e.key}: expected {count} values, got {len(vals)}", e.line)
    return vals


def _scalar(entries, key, default=None, section=""):
    e = _get(entries, key)
    if e is None:
        if default is None:
            raise ScenarioError(f"[{section}] needs {key!r}")
        return default
    return float(_floats(e, 1)[0])


def _int(e: _Entry) -> int:
    vals = e.values()
    if len(vals) != 1:
        raise ScenarioError(f"{e.key}: expected one integer", e.line)
    try:
        return int(vals[0])
    except ValueError:
        raise ScenarioError(f"{e.key}: {vals[0]!r} is not an integer", e.line) from None


def _selector(tok: str):
    return int(tok) if tok.lstrip("-").isdigit() else tok


def _knots(entries: list[_Entry], rows: int, m: int, what: str) -> Trajectory | None:
    knots = [e for e in entries if e.key == "knot"]
    if not knots:
        return None
    times, values = [], []
    for e in knots:
        try:
            t = float(e.arg)
        except ValueError:
            raise ScenarioError(f"knot needs a time, got {e.arg!r}", e.line) from None
        if times and not t > times[-1]:
            raise ScenarioError(f"{what} knots must be strictly increasing ({t} after {times[-1]})",
                                e.line)
        times.append(t)
        values.append(_floats(e, rows * m).reshape(rows, m))
    if times[0] != 0.0:
        raise ScenarioError(f"{what} trajectory must start at t = 0", knots[0].line)
    if len(times) == 1:
        raise ScenarioError(f"{what} trajectory needs at least two knots", knots[0].line)
    return Trajectory(np.array(times), np.array(values))


@dataclass(eq=False)
class Scenario:
    mesh_spec: MeshSpec
    model: FractureModel
    grid: TimeGrid
    settings: SolveSettings = field(default_factory=SolveSettings)
    initial_crack: CrackState = field(default_factory=CrackState)
    u0: Deformation | None = None
    grid_spec: tuple = ()  # ("steps", n) | ("points", ...) | ("shifted", m, s)

    @property
    def mesh(self):
        return self.model.mesh

    @property
    def T(self) -> float:
        return self.model.T


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario; errors carry the offending line number."""
    sec = _tokenize(text)

    ms = sec["mesh"]
    kind_e = _get(ms, "kind")
    if kind_e is None or kind_e.values() not in (["interval"], ["rectangle"]):
        raise ScenarioError("[mesh] kind must be 'interval' or 'rectangle'",
                            kind_e.line if kind_e else None)
    kind = kind_e.values()[0]
    dim = 1 if kind == "interval" else 2
    b_e, c_e = _get(ms, "bounds"), _get(ms, "cells")
    if b_e is None or c_e is None:
        raise ScenarioError("[mesh] needs 'bounds' and 'cells'", kind_e.line)
    bounds = tuple(_floats(b_e, 2 * dim))
    try:
        cells = tuple(int(t) for t in c_e.values())
    except ValueError:
        raise ScenarioError("cells must be integers", c_e.line) from None
    if len(cells) != dim:
        raise ScenarioError(f"cells: expected {dim} integers", c_e.line)
    sel = {k: tuple(_selector(t) for t in (_get(ms, k).values() if _get(ms, k) else ()))
           for k in ("dirichlet", "surface", "brittle")}
    spec = MeshSpec(kind, bounds, cells, sel["dirichlet"], sel["surface"], sel["brittle"])
    try:
        mesh = build_mesh(spec)
    except (MeshError, ValueError, IndexError) as exc:
        line = (_get(ms, "brittle") or _get(ms, "surface") or kind_e).line
        raise ScenarioError(f"invalid mesh: {exc}", line) from None

    te = sec["time"]
    T_e = _get(te, "T")
    if T_e is None:
        raise ScenarioError("[time] needs 'T'")
    T = float(_floats(T_e, 1)[0])
    if not T > 0:
        raise ScenarioError("T must be > 0", T_e.line)
    grid_keys = [k for k in ("steps", "points", "shifted") if _get(te, k)]
    if len(grid_keys) != 1:
        raise ScenarioError("[time] needs exactly one of 'steps', 'points', 'shifted'", T_e.line)
    gk = _get(te, grid_keys[0])
    try:
        if gk.key == "steps":
            n = _int(gk)
            if n < 1:
                raise ValueError("steps must be >= 1")
            grid, grid_spec = TimeGrid.uniform(T, n), ("steps", n)
        elif gk.key == "points":
            pts = _floats(gk)
            if pts[-1] != T:
                raise ValueError("grid points must end at T")
            grid, grid_spec = TimeGrid(pts), ("points", *pts.tolist())
        else:
            vals = gk.values()
            if len(vals) != 2:
                raise ValueError("shifted needs 'm s'")
            m_, s_ = int(vals[0]), float(vals[1])
            grid, grid_spec = TimeGrid.shifted(T, m_, s_), ("shifted", m_, s_)
    except ValueError as exc:
        raise ScenarioError(f"time grid: {exc}", gk.line) from None

    bd = sec.get("boundary", [])
    comp_e = _get(bd, "components")
    m = _int(comp_e) if comp_e else 1
    if m < 1:
        raise ScenarioError("components must be >= 1", comp_e.line)

    bu = sec["bulk"]
    p = _scalar(bu, "p", section="bulk")
    if not p > 1:
        raise ScenarioError(f"bulk exponent p = {p} violates the requirement p > 1",
                            _get(bu, "p").line)
    a_e, s_e = _get(bu, "a"), _get(bu, "stiffness")
    if (a_e is None) == (s_e is None):
        raise ScenarioError("[bulk] needs exactly one of 'a' (uniform) or 'stiffness'",
                            _get(bu, "p").line)
    stiff = (np.full(mesh.n_elements, _floats(a_e, 1)[0]) if a_e
             else _floats(s_e, mesh.n_elements))
    try:
        bulk = BulkModel(p, stiff)
    except ValueError as exc:
        raise ScenarioError(str(exc), (a_e or s_e).line) from None

    to = sec["toughness"]
    mode_e = _get(to, "mode")
    mode = mode_e.values()[0] if mode_e and mode_e.values() else "isotropic"
    try:
        if mode == "isotropic":
            k_e = _get(to, "k")
            if k_e is None:
                raise ScenarioError("isotropic toughness needs 'k'", mode_e.line if mode_e else None)
            kv = _floats(k_e)
            if len(kv) not in (1, mesh.n_facets):
                raise ScenarioError(f"k: expected 1 or {mesh.n_facets} values", k_e.line)
            tough = ToughnessModel.isotropic(mesh, kv if len(kv) > 1 else kv[0])
        elif mode == "anisotropic":
            A_e = _get(to, "A")
            if A_e is None:
                raise ScenarioError("anisotropic toughness needs 'A'", mode_e.line)
            Av = _floats(A_e)
            nn = dim * dim
            if len(Av) not in (nn, nn * mesh.n_facets):
                raise ScenarioError(f"A: expected {nn} or {nn * mesh.n_facets} values", A_e.line)
            tough = ToughnessModel.anisotropic(
                mesh, Av.reshape(dim, dim) if len(Av) == nn else Av.reshape(-1, dim, dim))
        else:
            raise ScenarioError(f"unknown toughness mode {mode!r}", mode_e.line)
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc), (mode_e or to[0]).line) from None

    psi = _knots(bd, mesh.n_vertices, m, "boundary")
    lin_r, lin_o = _get(bd, "linear_rate"), _get(bd, "linear_offset")
    if psi is not None and (lin_r or lin_o):
        raise ScenarioError("give boundary knots or a linear form, not both", (lin_r or lin_o).line)
    if psi is None:
        B = _floats(lin_r, m * dim).reshape(m, dim) if lin_r else np.zeros((m, dim))
        c = _floats(lin_o, m) if lin_o else np.zeros(m)
        rate = c[None, :] + mesh.vertices @ B.T
        psi = Trajectory(np.array([0.0, T]), np.stack([np.zeros_like(rate), T * rate]))
    if psi.T != T:
        raise ScenarioError(f"boundary trajectory must end at T = {T}",
                            [e for e in bd if e.key == "knot"][-1].line)

    bf = sec.get("body_force", [])
    eps = _scalar(bf, "eps", 0.0)
    q = _scalar(bf, "q", 2.0)
    if not q > 1:
        raise ScenarioError(f"body-force exponent q = {q} violates the requirement q > 1",
                            _get(bf, "q").line)
    if eps < 0:
        raise ScenarioError("eps must be >= 0", _get(bf, "eps").line)
    f = _knots(bf, mesh.n_elements, m, "body force")
    if f is None:
        f = Trajectory.constant(np.zeros((mesh.n_elements, m)), T)
    elif f.T != T:
        raise ScenarioError(f"body force trajectory must end at T = {T}",
                            [e for e in bf if e.key == "knot"][-1].line)

    sf = sec.get("surface_force", [])
    r = _scalar(sf, "r", 2.0)
    if not r > 1:
        raise ScenarioError(f"surface exponent r = {r} violates the requirement r > 1",
                            _get(sf, "r").line)
    ns = len(mesh.surface_force_facets)
    g = _knots(sf, ns, m, "surface force")
    if g is None:
        g = Trajectory.constant(np.zeros((ns, m)), T)
    elif g.T != T:
        raise ScenarioError(f"surface force trajectory must end at T = {T}",
                            [e for e in sf if e.key == "knot"][-1].line)

    model = FractureModel(mesh, bulk, tough, psi, BodyForceModel(f, eps, q),
                          SurfaceForceModel(g, r), m)

    ini = sec.get("initial", [])
    crack = CrackState()
    cr_e = _get(ini, "crack")
    if cr_e is not None:
        try:
            ids = [int(t) for t in cr_e.values()]
        except ValueError:
            raise ScenarioError("crack: facet ids must be integers", cr_e.line) from None
        bad = [i for i in ids if i not in mesh.brittle_facets]
        if bad:
            raise ScenarioError(f"crack: facets {bad} are not brittle facet indices", cr_e.line)
        crack = CrackState(ids)
    u0 = None
    u_e = _get(ini, "u0")
    if u_e is not None:
        dm = dof_map_for(mesh, crack, m)
        u0 = Deformation(dm, _floats(u_e, dm.n_nodes * m).reshape(dm.n_nodes, m))

    st = sec.get("settings", [])
    kw: dict[str, Any] = {}
    types = {f.name: f.type for f in fields(SolveSettings)}
    for e in st:
        vals = e.values()
        if len(vals) != 1:
            raise ScenarioError(f"{e.key}: expected one value", e.line)
        v = vals[0]
        try:
            if e.key in ("strategy", "facet_tie_break", "floating"):
                kw[e.key] = v
            elif "int" in str(types[e.key]):
                kw[e.key] = int(v)
            else:
                kw[e.key] = None if v == "none" else float(v)
        except ValueError:
            raise ScenarioError(f"{e.key}: bad value {v!r}", e.line) from None
    try:
        settings = SolveSettings(**kw)
    except ValueError as exc:
        raise ScenarioError(f"settings: {exc}", st[0].line if st else None) from None

    return Scenario(spec, model, grid, settings, crack, u0, grid_spec)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


# -- writing scenarios -------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _rows(arr: np.ndarray) -> list[str]:
    arr = np.asarray(arr, dtype=float)
    arr = arr.reshape(len(arr), -1)
    return ["    " + " ".join(_fmt(v) for v in row) for row in arr]


def _sel(tok) -> str:
    if callable(tok):
        raise ValueError("callable facet selectors cannot be written to a scenario file")
    return str(tok)


def _traj_lines(traj: Trajectory) -> list[str]:
    out = []
    for t, vals in zip(traj.times, traj.values):
        out.append(f"knot {_fmt(t)} =")
        out.extend(_rows(vals))
    return out


def write_scenario(sc: Scenario) -> str:
    """Serialize ``sc``; :func:`parse_scenario` reproduces it exactly."""
    spec, model = sc.mesh_spec, sc.model
    lines = [SCENARIO_HEADER, "[mesh]", f"kind = {spec.kind}",
             "bounds = " + " ".join(_fmt(b) for b in spec.bounds),
             "cells = " + " ".join(str(c) for c in spec.cells)]
    for key in ("dirichlet", "surface", "brittle"):
        toks = getattr(spec, key)
        if toks:
            lines.append(f"{key} = " + " ".join(_sel(t) for t in toks))
    lines += ["", "[bulk]", f"p = {_fmt(model.bulk.p)}", "stiffness ="]
    lines += _rows(model.bulk.stiffness)
    tough = model.toughness
    lines += ["", "[toughness]", f"mode = {tough.mode}"]
    if tough.mode == "isotropic":
        lines.append("k =")
        lines += _rows(tough.k)
    else:
        lines.append("A =")
        lines += _rows(tough.A.reshape(len(tough.A), -1))
    lines += ["", "[body_force]", f"eps = {_fmt(model.body.eps)}", f"q = {_fmt(model.body.q)}"]
    lines += _traj_lines(model.body.f)
    lines += ["", "[surface_force]", f"r = {_fmt(model.surface.r)}"]
    if len(model.mesh.surface_force_facets):
        lines += _traj_lines(model.surface.g)
    lines += ["", "[boundary]", f"components = {model.m}"]
    lines += _traj_lines(model.psi)
    lines += ["", "[initial]"]
    if len(sc.initial_crack):
        lines.append("crack = " + " ".join(str(i) for i in sc.initial_crack.sorted()))
    if sc.u0 is not None:
        lines.append("u0 =")
        lines += _rows(sc.u0.values)
    lines += ["", "[time]", f"T = {_fmt(model.T)}"]
    gs = sc.grid_spec or ("points", *sc.grid.points.tolist())
    if gs[0] == "steps":
        lines.append(f"steps = {gs[1]}")
    elif gs[0] == "shifted":
        lines.append(f"shifted = {gs[1]} {_fmt(gs[2])}")
    else:
        lines.append("points = " + " ".join(_fmt(x) for x in sc.grid.points))
    st = sc.settings
    lines += ["", "[settings]"]
    for f in fields(SolveSettings):
        v = getattr(st, f.name)
        lines.append(f"{f.name} = {'none' if v is None else (_fmt(v) if isinstance(v, float) else v)}")
    return "\n".join(lines) + "\n"


# -- traces ------------------------------------------------------------------------

CSV_FIELDS = ("step", "t", "crack", "bulk", "crack_energy", "body_work", "surface_work",
              "elastic", "total", "theta", "cumulative_work", "competitor_gap",
              "euler_residual", "oracle_certified")


def trace_rows(trace: EvolutionTrace) -> list[dict[str, Any]]:
    rows = []
    for s in trace.steps:
        e = s.energy
        rows.append({
            "step": s.index, "t": s.t, "crack": ";".join(str(i) for i in s.crack.sorted()),
            "bulk": e.bulk, "crack_energy": e.crack, "body_work": e.body_work,
            "surface_work": e.surface_work, "elastic": e.elastic, "total": e.total,
            "theta": s.theta, "cumulative_work": s.cumulative_work,
            "competitor_gap": s.competitor_gap, "euler_residual": s.euler_residual,
            "oracle_certified": int(s.oracle_certified),
        })
    return rows


def _csv_text(header: str, fieldnames, rows) -> str:
    buf = io.StringIO()
    buf.write(header + "\n")
    w = csv.DictWriter(buf, fieldnames=list(fieldnames), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _step_json(s: TraceStep) -> dict:
    e = s.energy
    return {
        "index": s.index, "t": s.t, "crack": list(s.crack.sorted()),
        "energy": {"bulk": e.bulk, "crack": e.crack, "body_work": e.body_work,
                   "surface_work": e.surface_work},
        "theta": s.theta, "cumulative_work": s.cumulative_work,
        "competitor_gap": s.competitor_gap, "euler_residual": s.euler_residual,
        "oracle_certified": s.oracle_certified,
        "u": None if s.u is None else s.u.values.tolist(),
    }


def to_structured(obj) -> dict:
    if isinstance(obj, EvolutionTrace):
        return {"format": "qsfracture-trace", "version": FORMAT_VERSION, "kind": "trace",
                "strategy": obj.strategy, "steps": [_step_json(s) for s in obj.steps]}
    if isinstance(obj, AuditReport):
        return {"format": "qsfracture-trace", "version": FORMAT_VERSION, "kind": "audit",
                "upper_gaps": obj.upper_gaps.tolist(), "max_upper_gap": obj.max_upper_gap,
                "balance_defect": obj.balance_defect, "certified": obj.certified,
                "nucleation_steps": list(obj.nucleation_steps),
                "min_competitor_gap": obj.min_competitor_gap, "warnings": list(obj.warnings)}
    if isinstance(obj, ConvergenceReport):
        return {"format": "qsfracture-trace", "version": FORMAT_VERSION, "kind": "convergence",
                "steps": list(obj.steps), "deltas": list(obj.deltas),
                "probe_times": list(obj.probe_times), "elastic": obj.elastic.tolist(),
                "crack": obj.crack.tolist(), "theta_l1_diffs": list(obj.theta_l1_diffs),
                "nucleation_times": list(obj.nucleation_times)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_structured(data: dict, model: FractureModel | None = None):
    """Inverse of :func:`to_structured`.  Deformations need ``model``."""
    if data.get("format") != "qsfracture-trace" or data.get("version") != FORMAT_VERSION:
        raise ValueError("not a qsfracture trace (or unsupported version)")
    kind = data["kind"]
    if kind == "trace":
        steps = []
        for d in data["steps"]:
            crack = CrackState(d["crack"])
            u = None
            if model is not None and d["u"] is not None:
                u = Deformation(dof_map_for(model.mesh, crack, model.m), np.array(d["u"]))
            steps.append(TraceStep(d["index"], d["t"], crack, EnergyBreakdown(**d["energy"]),
                                   d["theta"], d["cumulative_work"], d["competitor_gap"],
                                   d["euler_residual"], d["oracle_certified"], u))
        return EvolutionTrace(steps, model, data["strategy"])
    if kind == "audit":
        return AuditReport(np.array(data["upper_gaps"], dtype=float), data["max_upper_gap"],
                           data["balance_defect"], data["certified"],
                           tuple(data["nucleation_steps"]), data["min_competitor_gap"],
                           tuple(data["warnings"]))
    if kind == "convergence":
        return ConvergenceReport(tuple(data["steps"]), tuple(data["deltas"]),
                                 tuple(data["probe_times"]), np.array(data["elastic"]),
                                 np.array(data["crack"]), tuple(data["theta_l1_diffs"]),
                                 tuple(data["nucleation_times"]))
    raise ValueError(f"unknown record kind {kind!r}")


def _csv_for(obj) -> str:
    if isinstance(obj, EvolutionTrace):
        return _csv_text(TRACE_HEADER, CSV_FIELDS, trace_rows(obj))
    if isinstance(obj, AuditReport):
        rows = [{"step": i, "upper_gap": g} for i, g in enumerate(obj.upper_gaps)]
        return _csv_text(TRACE_HEADER + " audit", ("step", "upper_gap"), rows)
    if isinstance(obj, ConvergenceReport):
        rows = []
        for j, (n, d) in enumerate(zip(obj.steps, obj.deltas)):
            for k, t in enumerate(obj.probe_times):
                rows.append({"grid": j, "steps": n, "delta": d, "probe": t,
                             "elastic": obj.elastic[j, k], "crack_energy": obj.crack[j, k],
                             "theta_l1_diff": obj.theta_l1_diffs[j - 1] if j else math.nan})
        return _csv_text(TRACE_HEADER + " convergence",
                         ("grid", "steps", "delta", "probe", "elastic", "crack_energy",
                          "theta_l1_diff"), rows)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_trace(obj: EvolutionTrace | AuditReport | ConvergenceReport, path: str | Path) -> None:
    """Write CSV, or the lossless JSON variant when ``path`` ends in ``.json``."""
    path = Path(path)
    if path.suffix == ".json":
        text = json.dumps(to_structured(obj), indent=1)
    else:
        text = _csv_for(obj)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_trace(path: str | Path, model: FractureModel | None = None):
    return from_structured(json.loads(Path(path).read_text(encoding="utf-8")), model)


def read_trace_csv(path: str | Path) -> list[dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# qsfracture trace"):
        raise ValueError("missing trace header line")
    return list(csv.DictReader(lines[1:]))
