"""Command-line front end: ``nlscat run | converge | verify``.

Exit codes: 0 success, 1 invalid configuration or input, 2 numerical failure
(Newton breakdown, assembly failure, or a failed verification check).

CSV outputs
-----------
``fields.csv``
    step, stage, t, point, x, y, z, E_abs, E_x, E_y, E_z, H_x, H_y, H_z
``density_norms.csv``
    step, stage, t, phi_l2, psi_l2, phi_lp, psi_lp, newton_iterations
    (``lp`` is the L^(1+alpha) norm)
``convergence_<axis>.csv``
    level, tau, h_max, n_dofs, error, order, seconds, reference

All floats are written with 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import SUITE, run_suite
from .config import ConfigError, ExperimentConfig, config_to_dict, load_config
from .experiments import convergence_study, fitted_order, run_experiment
from .maxwell_kernels import NearSurfaceError
from .scattering_solver import AssemblyError, NewtonError
from .surface_mesh import MeshError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger("nlscat")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _output_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    return Path(override if override is not None else cfg.output_dir)


# ---------------------------------------------------------------- commands


def cmd_run(cfg: ExperimentConfig, out: Path) -> dict:
    res = run_experiment(cfg)
    f, hist = res.fields, res.history
    rows = []
    for n in range(hist.n_steps):
        for k in range(hist.phi.shape[1]):
            for p, x in enumerate(f.points):
                E, H = f.E[n, k, p], f.H[n, k, p]
                rows.append([n, k, f.times[n, k], p, *x, np.linalg.norm(E), *E, *H])
    _write_csv(out / "fields.csv",
               ["step", "stage", "t", "point", "x", "y", "z", "E_abs", "E_x", "E_y", "E_z", "H_x", "H_y", "H_z"], rows)
    nr = res.norms
    rows = [[n, k, hist.times[n, k], nr["phi_l2"][n, k], nr["psi_l2"][n, k], nr["phi_lp"][n, k], nr["psi_lp"][n, k],
             hist.newton_iterations[n]]
            for n in range(hist.n_steps) for k in range(hist.phi.shape[1])]
    _write_csv(out / "density_norms.csv",
               ["step", "stage", "t", "phi_l2", "psi_l2", "phi_lp", "psi_lp", "newton_iterations"], rows)
    summary = {"mesh": res.mesh_stats, "n_dofs": res.n_dofs, "steps": hist.n_steps,
               "max_newton_iterations": max(hist.newton_iterations),
               "max_abs_E": float(np.abs(f.E).max()) if f.E.size else 0.0}
    (out / "run.json").write_text(json.dumps({"config": config_to_dict(cfg), "summary": summary}, indent=2) + "\n")
    return summary


def cmd_converge(cfg: ExperimentConfig, axis: str, out: Path) -> list:

    rows = convergence_study(cfg, axis)
    _write_csv(out / f"convergence_{axis}.csv",
               ["level", "tau", "h_max", "n_dofs", "error", "order", "seconds", "reference"],
               [[r.level, r.tau, r.h_max, r.n_dofs, r.error, r.order, r.seconds, r.reference] for r in rows])
    return rows


def cmd_verify(selection, report: Path | None) -> bool:
    results = run_suite(selection, log=print)
    doc = {"passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    if report is not None:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(json.dumps(doc, indent=2, default=float) + "\n")
    print(json.dumps({"passed": doc["passed"], "failed": [r.name for r in results if not r.passed]}))
    return doc["passed"]


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlscat", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", help="TOML or JSON experiment file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. time.N=128 or wave.c=10 (repeatable)")
        p.add_argument("-o", "--output-dir", help="overrides output_dir")

    common(sub.add_parser("run", help="simulate and write field and density time series"))
    pc = sub.add_parser("converge", help="self-convergence study in time or space")
    common(pc)
    pc.add_argument("--axis", choices=("time", "space"), required=True)
    pv = sub.add_parser("verify", help="run the property checks")
    common(pv)
    pv.add_argument("--only", nargs="+", choices=sorted(SUITE), help="subset of checks")
    pv.add_argument("--report", help="JSON report path (default: <output_dir>/verify.json)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.overrides)
        out = _output_dir(cfg, args.output_dir)
        if args.command == "run":
            summary = cmd_run(cfg, out)
            print(json.dumps(summary))
        elif args.command == "converge":
            rows = cmd_converge(cfg, args.axis, out)
            for r in rows:
                order = "" if r.order is None else f"{r.order:.3f}"
                print(f"level={r.level} tau={r.tau:.5g} h={r.h_max:.4g} error={r.error:.4e} order={order}")
            print(f"fitted order={fitted_order(rows, args.axis):.3f}")
        else:
            report = Path(args.report) if args.report else out / "verify.json"
            if not cmd_verify(args.only, report):
                return EXIT_NUMERICAL
    except (ConfigError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonError, AssemblyError, NearSurfaceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
