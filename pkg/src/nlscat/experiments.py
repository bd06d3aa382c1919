"""Experiment drivers behind the command line: single runs and self-convergence studies."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .rt_space import assemble_mass, build_rt_space, lp_norm
from .scattering_solver import DensityHistory, FieldSamples, build_solver
from .surface_mesh import mesh_statistics

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    history: DensityHistory
    fields: FieldSamples
    mesh_stats: dict
    seconds: float
    n_dofs: int
    norms: dict = field(default_factory=dict)  # name -> (n_steps, m) array


def density_norms(space, hist: DensityHistory, alpha: float) -> dict:
    """L2 and L^(1+alpha) norms of phi and psi for every step and stage."""
    M = assemble_mass(space)
    out = {}
    for name in ("phi", "psi"):
        c = getattr(hist, name)
        out[f"{name}_l2"] = np.sqrt(np.maximum(np.einsum("nix,xy,niy->ni", c, M, c), 0.0))
        out[f"{name}_lp"] = lp_norm(space, c, 1.0 + alpha)
    return out


def run_experiment(cfg: ExperimentConfig, n: int | None = None, N: int | None = None) -> RunResult:
    """Solve the configured scene (optionally at mesh level ``n`` and ``N`` steps) and sample the fields."""
    t0 = time.perf_counter()
    mesh = cfg.scene.build(n)
    space = build_rt_space(mesh)
    solver = build_solver(cfg.solver_config(N), space, cfg.wave.build())
    hist = solver.run()
    fields = solver.evaluate_fields(hist, np.asarray(cfg.points, float))
    res = RunResult(hist, fields, mesh_statistics(mesh), time.perf_counter() - t0, space.n_dofs,
                    density_norms(space, hist, cfg.alpha))
    log.info("run n=%s N=%s: %d dofs, %.1fs", n, hist.n_steps - 1, space.n_dofs, res.seconds)
    return res


def field_error(a: FieldSamples, tau_a: float, b: FieldSamples, tau_b: float, weights, T: float) -> float:
    """Discrete L2-in-time distance of point fields, summed over points.

    Equal grids use all stages weighted by the tableau; nested grids
    (``tau_a = k tau_b``) compare step end points.
    """
    ratio = tau_a / tau_b
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise ValueError("time grids are not nested")
    na = a.E.shape[0]
    ia = np.arange(na)
    keep = a.times[:, -1] <= T * (1 + 1e-12)
    if k == 1:
        ia = ia[keep & (ia < b.E.shape[0])]
        d = a.E[ia] - b.E[ia]
        sq = np.sum(d**2, axis=(-1, -2))  # (n, m)
        return float(np.sqrt(tau_a * np.sum(sq * np.asarray(weights)[None, :])))
    ib = (ia + 1) * k - 1
    keep &= ib < b.E.shape[0]
    d = a.E[ia[keep], -1] - b.E[ib[keep], -1]
    return float(np.sqrt(tau_a * np.sum(d**2)))


@dataclass
class ConvergenceRow:
    level: int  # N for the time axis, cells per cube edge for the space axis
    tau: float
    h_max: float
    n_dofs: int
    error: float
    order: float | None
    seconds: float
    reference: bool = False


def convergence_study(cfg: ExperimentConfig, axis: str) -> list[ConvergenceRow]:
    """Errors of point-evaluated E against the configuration's own reference run.

    The last row is the reference compared with itself (error 0). Orders are
    ``log(e_k / e_k+1) / log(p_k / p_k+1)`` with ``p`` the step size or mesh width.
    """
    cv = cfg.convergence
    T = cfg.time.T
    if axis == "time":
        levels, ref_level = list(cv.time_N), cv.time_reference_N

        def solve(level):
            return run_experiment(cfg, n=cv.time_mesh_n, N=level)
    elif axis == "space":
        levels, ref_level = list(cv.space_n), cv.space_reference_n

        def solve(level):
            return run_experiment(cfg, n=level, N=cv.space_N)
    else:
        raise ValueError(f"axis must be 'time' or 'space', got {axis!r}")

    ref = solve(ref_level)
    rows = []
    for level in levels:
        r = solve(level)
        err = field_error(r.fields, r.history.tau, ref.fields, ref.history.tau, r.history.b, T)
        rows.append(ConvergenceRow(level, r.history.tau, r.mesh_stats["h_max"], r.n_dofs, err, None, r.seconds))
    for prev, row in zip(rows, rows[1:]):
        p_prev, p_row = (prev.tau, row.tau) if axis == "time" else (prev.h_max, row.h_max)
        if prev.error > 0 and row.error > 0:
            row.order = float(np.log(prev.error / row.error) / np.log(p_prev / p_row))
    rows.append(ConvergenceRow(ref_level, ref.history.tau, ref.mesh_stats["h_max"], ref.n_dofs, 0.0, None,
                               ref.seconds, reference=True))
    return rows


def fitted_order(rows: list[ConvergenceRow], axis: str) -> float:
    """Least-squares slope of ``log(error)`` against ``log(tau)`` or ``log(h_max)`` over the non-reference rows."""
    pts = [(r.tau if axis == "time" else r.h_max, r.error) for r in rows if not r.reference and r.error > 0]
    if len(pts) < 2:
        raise ValueError("an order fit needs at least two nonzero errors")
    p, e = np.log(np.array(pts)).T
    return float(np.polyfit(p, e, 1)[0])
