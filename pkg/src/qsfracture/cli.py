"""Command-line interface: ``qsfracture {run,oracle-check,converge,riemann-demo,validate}``.

Exit codes: 0 success, 1 usage/parse error, 2 solver failure, 3 invariant
violation on an oracle-certified run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .driver import convergence_study, energy_audit, run_evolution
from .scenario import ScenarioError, load_scenario, write_trace
from .signals import battery, best_shift
from .solver import SolverError

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("qsfracture")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _r(x) -> str:
    return repr(float(x))


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _violations(trace) -> list[str]:
    out = []
    for a, b in zip(trace.steps[:-1], trace.steps[1:]):
        if not a.crack <= b.crack:
            out.append(f"step {b.index}: crack shrank")
    for s in trace.steps[1:]:
        if s.competitor_gap < -1e-12:
            out.append(f"step {s.index}: competitor gap {s.competitor_gap:.3e} < 0")
    return out


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    settings = replace(sc.settings, strategy=args.strategy) if args.strategy else sc.settings
    trace = run_evolution(sc.model, sc.grid, settings, sc.initial_crack, sc.u0)
    audit = energy_audit(trace)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out / "trace.csv")
    write_trace(trace, out / "trace.json")
    write_trace(audit, out / "audit.csv")
    write_trace(audit, out / "audit.json")
    last = trace.steps[-1]
    print(f"steps={len(trace.steps) - 1} final_crack={list(last.crack.sorted())} "
          f"E(T)={last.energy.total:.12g} balance_defect={audit.balance_defect:.3e} "
          f"certified={trace.certified}")
    bad = _violations(trace)
    for msg in bad:
        print(f"violation: {msg}", file=sys.stderr)
    return EXIT_INVARIANT if bad and trace.certified else EXIT_OK


def cmd_oracle_check(args) -> int:
    sc = load_scenario(args.scenario)
    runs = {s: run_evolution(sc.model, sc.grid, replace(sc.settings, strategy=s),
                             sc.initial_crack, sc.u0) for s in ("exhaustive", "greedy")}
    ex, gr = runs["exhaustive"], runs["greedy"]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", "t", "E_exhaustive", "E_greedy", "gap", "same_crack"])
    worst, same = 0.0, True
    for a, b in zip(ex.steps, gr.steps):
        gap = b.energy.total - a.energy.total
        worst = min(worst, gap)
        same &= a.crack == b.crack
        w.writerow([a.index, _r(a.t), _r(a.energy.total), _r(b.energy.total), _r(gap),
                    int(a.crack == b.crack)])
    print(f"# identical_cracks={same} min_gap={worst:.3e}")
    return EXIT_INVARIANT if worst < -1e-9 * (1 + abs(ex.steps[-1].energy.total)) else EXIT_OK


def cmd_converge(args) -> int:
    sc = load_scenario(args.scenario)
    base = args.base_steps or len(sc.grid)
    probes = _floats(args.probes) if args.probes else None
    rep = convergence_study(sc.model, base, args.refinements, probes, sc.settings,
                            sc.initial_crack, allow_greedy=args.allow_greedy)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["steps", "delta", "probe", "elastic", "crack_energy"])
    for j, (n, d) in enumerate(zip(rep.steps, rep.deltas)):
        for k, t in enumerate(rep.probe_times):
            w.writerow([n, _r(d), _r(t), _r(rep.elastic[j, k]), _r(rep.crack[j, k])])
    print("# theta_l1_diffs=" + ",".join(f"{x:.6e}" for x in rep.theta_l1_diffs))
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        write_trace(rep, out / "convergence.csv")
        write_trace(rep, out / "convergence.json")
    return EXIT_OK


def cmd_riemann_demo(args) -> int:
    pairs = battery(args.function)
    fs = [f for f, _ in pairs]
    Fs = [F for _, F in pairs]
    shifts = np.random.default_rng(args.seed).uniform(0.0, 1.0, args.shifts)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["m", "best_shift", "strong_defect", "mean_defect"])
    for m in _ints(args.m_list):
        res = best_shift(fs, m, 0.0, 1.0, shifts, Fs)
        w.writerow([m, _r(res.best_shift), _r(res.best_defect), _r(res.mean_defect)])
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    mesh = sc.mesh
    print(f"ok: dim={mesh.dim} vertices={mesh.n_vertices} elements={mesh.n_elements} "
          f"facets={mesh.n_facets} brittle={len(mesh.brittle_facets)} "
          f"dirichlet={len(mesh.dirichlet_facets)} T={sc.T:g} steps={len(sc.grid)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsfracture", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an evolution and write trace + audit")
    r.add_argument("scenario")
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--strategy", choices=("exhaustive", "greedy"))
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle-check", help="compare exhaustive and greedy runs")
    o.add_argument("scenario")
    o.set_defaults(func=cmd_oracle_check)

    c = sub.add_parser("converge", help="grid-refinement study")
    c.add_argument("scenario")
    c.add_argument("--refinements", type=int, default=3)
    c.add_argument("--base-steps", type=int, default=None)
    c.add_argument("--probes", default=None, help="comma-separated probe times")
    c.add_argument("--allow-greedy", action="store_true")
    c.add_argument("-o", "--output", default=None)
    c.set_defaults(func=cmd_converge)

    d = sub.add_parser("riemann-demo", help="best shifted-grid Riemann sums")
    d.add_argument("--function", default="step", choices=("step", "smooth", "kinked", "linear"))
    d.add_argument("--m-list", default="8,16,32,64")
    d.add_argument("--shifts", type=int, default=64)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_riemann_demo)

    v = sub.add_parser("validate", help="parse and validate a scenario")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
