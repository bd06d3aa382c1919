"""Executable property checks shared by the test suite and the ``verify`` command.

Every check returns a :class:`CheckResult` carrying the measured quantity,
the threshold it is compared with and a pass flag. Random sampling always
goes through ``numpy.random.default_rng(seed)`` so reports are reproducible.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from . import cq_engine as cq
from .maxwell_kernels import assemble_layer_operators, dipole_fields, eval_potentials
from .nonlinearity import PowerLaw, a_eval, a_inv, assemble_nonlinear_residual
from .rt_space import RTSpace, assemble_mass, assemble_pairing, build_rt_space, interpolate_trace
from .scattering_solver import DensityHistory, IncidentWave, ScatteringSolver, SolverConfig, build_solver
from .surface_mesh import make_cube_mesh


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: value={self.value:.3e} threshold={self.threshold:.3e} ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = bool(d["passed"])
        return d


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_vectors(rng, n: int, log_range=(-3.0, 3.0)) -> np.ndarray:
    """Gaussian directions with log-uniform magnitudes in ``10**log_range``."""
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * 10.0 ** rng.uniform(*log_range, size=(n, 1))


# ---------------------------------------------------------------- nonlinearity


def monotonicity_gaps(alpha: float, u, v):
    """Signed gaps ``lhs - rhs`` of the monotonicity and Hoelder inequalities, with their scales."""
    pl = PowerLaw(alpha)
    au, av = a_eval(pl, u), a_eval(pl, v)
    d = u - v
    nd = np.linalg.norm(d, axis=1)
    lhs_mono = np.einsum("ij,ij->i", d, au - av)
    rhs_mono = alpha * (np.linalg.norm(u, axis=1) + np.linalg.norm(v, axis=1)) ** (alpha - 1) * nd**2
    lhs_hold = 2.0 * nd**alpha
    rhs_hold = np.linalg.norm(au - av, axis=1)
    mono = (lhs_mono - rhs_mono, np.maximum(np.abs(lhs_mono), np.abs(rhs_mono)))
    hold = (lhs_hold - rhs_hold, np.maximum(lhs_hold, rhs_hold))
    return mono, hold


@_timed
def check_nonlinearity_inequalities(n_pairs: int = 100_000, alphas=(0.1, 0.5, 0.9, 1.0), seed: int = 0,
                                    slack: float = 1e-13) -> CheckResult:
    """Strong monotonicity and Hoelder continuity on random pairs; the value is the worst relative violation."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    detail = {}
    for alpha in alphas:
        u = random_vectors(rng, n_pairs)
        # half of the pairs are close together, where rounding is most delicate
        v = random_vectors(rng, n_pairs)
        close = rng.random(n_pairs) < 0.5
        v[close] = u[close] + random_vectors(rng, int(close.sum()), (-8.0, 0.0)) * np.linalg.norm(u[close], axis=1, keepdims=True)
        mono, hold = monotonicity_gaps(alpha, u, v)
        viol_m = np.max(-mono[0] / np.maximum(mono[1], 1e-300))
        viol_h = np.max(-hold[0] / np.maximum(hold[1], 1e-300))
        detail[f"alpha={alpha}"] = {"monotonicity": float(viol_m), "hoelder": float(viol_h)}
        worst = max(worst, viol_m, viol_h)
    return CheckResult("nonlinearity_inequalities", bool(worst <= slack), float(worst), slack, detail)


@_timed
def check_inverse_roundtrip(n: int = 100_000, alphas=(0.1, 0.5, 0.9, 1.0), seed: int = 1,
                            tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for alpha in alphas:
        pl = PowerLaw(alpha)
        x = random_vectors(rng, n, (-6.0, 6.0))
        back = a_inv(pl, a_eval(pl, x))
        err = np.linalg.norm(back - x, axis=1) / np.linalg.norm(x, axis=1)
        worst = max(worst, float(err.max()))
    return CheckResult("inverse_roundtrip", worst < tol, worst, tol)


# ---------------------------------------------------------------- convolution quadrature


# contour settings per stage count: m=3 reaches its higher order only above the aliasing floor
CQ_CONTOUR = {2: {"oversample": 1, "eps": 1e-14}, 3: {"oversample": 4, "eps": 1e-8}}


@_timed
def check_cq_orders(ms=(2, 3), T: float = 1.0, Ns=(16, 32, 64, 128, 256)) -> CheckResult:
    """Empirical orders for ``s`` (need ``>= m - 0.2``) and ``1/s`` (need ``>= m + 0.5``) on ``t**5``."""
    g = lambda t: t**5
    detail, margin = {}, np.inf
    for m in ms:
        kw = CQ_CONTOUR.get(m, CQ_CONTOUR[2])
        der = cq.scalar_order_study(m, lambda s: s, lambda t: 5 * t**4, g, T, Ns, **kw)
        itg = cq.scalar_order_study(m, lambda s: 1 / s, lambda t: t**6 / 6, g, T, Ns, **kw)
        detail[f"m={m}"] = {"derivative": der["order"], "antiderivative": itg["order"]}
        margin = min(margin, der["order"] - (m - 0.2), itg["order"] - (m + 0.5))
    return CheckResult("cq_orders", bool(margin >= 0), float(margin), 0.0, detail)


@_timed
def check_partial_integration(ms=(2, 3), rho: float = 0.99, n_samples: int = 512) -> CheckResult:
    zetas = rho * np.exp(2j * np.pi * np.arange(n_samples) / n_samples)
    slack = {m: cq.check_partial_integration_matrix_bound(cq.radau_tableau(m), zetas) for m in ms}
    worst = max(slack.values())
    return CheckResult("partial_integration_bound", bool(worst <= 0), float(worst), 0.0,
                       {f"m={m}": v for m, v in slack.items()})


@_timed
def check_coercivity(n_seq: int = 1000, length: int = 64, tau: float = 0.05, T: float | None = None,
                     seed: int = 2) -> CheckResult:
    """m=2 weighted inequality and m=3 nonnegativity on random real sequences."""
    T = length * tau if T is None else T
    rng = np.random.default_rng(seed)
    detail, worst = {}, -np.inf
    for m in (2, 3):
        tab = cq.radau_tableau(m)
        seqs = rng.standard_normal((n_seq, length, m))
        gaps = []
        for f in seqs:
            lhs, rhs = cq.coercivity_margin(tab, tau, T, f)
            target = rhs if m == 2 else 0.0
            gaps.append((target - lhs) / max(abs(lhs), abs(rhs)))
        detail[f"m={m}"] = float(max(gaps))
        worst = max(worst, max(gaps))
    return CheckResult("discrete_coercivity", bool(worst <= 1e-12), float(worst), 1e-12, detail)


# ---------------------------------------------------------------- boundary operators


def calderon_matrix(space: RTSpace, s) -> np.ndarray:
    V, K = assemble_layer_operators(space, [s])
    V, K = V[0], K[0]
    return np.block([[-V, K], [-K, -V]])


@_timed
def check_calderon_positivity(n: int = 2, s_values=(1.0, 2 + 3j, 5.0), n_dens: int = 100, seed: int = 3,
                              tol: float = 1e-8) -> CheckResult:
    """``Re(c^H C(s) c) >= -tol * |C| |c|^2`` for random complex densities."""
    space = build_rt_space(make_cube_mesh(n=n))
    rng = np.random.default_rng(seed)
    worst, detail = -np.inf, {}
    for s in s_values:
        C = calderon_matrix(space, s)
        c = rng.standard_normal((n_dens, C.shape[0])) + 1j * rng.standard_normal((n_dens, C.shape[0]))
        form = np.einsum("ki,ij,kj->k", c.conj(), C, c).real
        scale = np.linalg.norm(C, 2) * np.sum(np.abs(c) ** 2, axis=1)
        rel = float(np.max(-form / scale))
        detail[str(complex(s))] = {"min_form_over_scale": float(np.min(form / scale))}
        worst = max(worst, rel)
    return CheckResult("calderon_positivity", bool(worst <= tol), float(worst), tol, detail)


def jump_residual(space: RTSpace, s, source=(0.1, 0.05, -0.1), moment=(0.3, -0.5, 0.8)) -> float:
    """Relative residual of ``C(s) c = J c / 2`` for the traces of a field radiated from inside."""
    def E(x):
        return dipole_fields(s, source, moment, x)[0]

    def H(x):
        return dipole_fields(s, source, moment, x)[1]

    c = np.concatenate([interpolate_trace(space, H), -interpolate_trace(space, E)])
    P = assemble_pairing(space)
    Z = np.zeros_like(P)
    J = np.block([[Z, -P], [P, Z]])
    rhs = 0.5 * (J @ c)
    return float(np.linalg.norm(calderon_matrix(space, s) @ c - rhs) / np.linalg.norm(rhs))


@_timed
def check_calderon_projector(levels=(1, 2, 4), s=2 + 1j) -> CheckResult:
    res = [jump_residual(build_rt_space(make_cube_mesh(n=n)), s) for n in levels]
    ratios = [b / a for a, b in zip(res, res[1:])]
    worst = max(ratios)
    return CheckResult("calderon_projector", bool(worst < 1.0), float(worst), 1.0,
                       {"levels": list(levels), "residuals": res})


@_timed
def check_pairing_antisymmetry(n: int = 2, P: np.ndarray | None = None, tol: float = 1e-13) -> CheckResult:
    """``|P + P^T| / |P|``; pass ``P`` to test a given (possibly tampered) matrix."""
    if P is None:
        P = assemble_pairing(build_rt_space(make_cube_mesh(n=n)))
    val = float(np.abs(P + P.T).max() / np.abs(P).max())
    return CheckResult("pairing_antisymmetry", val <= tol, val, tol)


def curl_fd(fn, x, h):
    """Central-difference curl of a vector field ``fn`` at point ``x``."""
    J = np.empty((3, 3), complex)  # J[i, j] = d F_i / d x_j
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        J[:, j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


@_timed
def check_pde_residual(n: int = 2, s=2 + 1j, n_points: int = 5, seed: int = 4, tol: float = 1e-3) -> CheckResult:
    """Finite-difference residual of ``s E - curl H`` for potentials of random densities."""
    space = build_rt_space(make_cube_mesh(n=n))
    rng = np.random.default_rng(seed)
    D = space.n_dofs
    phi = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    psi = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    dirs = rng.standard_normal((n_points, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = dirs * rng.uniform(1.2, 2.0, size=(n_points, 1))
    worst = 0.0
    for x in pts:
        dist = np.linalg.norm(np.maximum(np.abs(x) - 0.5, 0.0))  # to the unit cube
        h = 1e-4 * dist

        def H(y):
            return eval_potentials(space, s, phi, psi, y[None])[1][0]

        E = eval_potentials(space, s, phi, psi, x[None])[0][0]
        r = np.linalg.norm(s * E - curl_fd(H, x, h)) / np.linalg.norm(s * E)
        worst = max(worst, float(r))
    return CheckResult("pde_residual", worst < tol, worst, tol, {"points": pts.tolist()})


# ---------------------------------------------------------------- solver level


def independent_linear_history(solver: ScatteringSolver) -> np.ndarray:
    """Reference solution for ``alpha = 1`` from explicitly computed CQ weights.

    Builds ``W_0..W_N`` of the full impedance block by :func:`cq_weights`,
    adds the mass matrix to the magnetic block (the identity power law) and
    marches with a plain direct convolution and one LU factorization. Only the
    mesh, the incident data and the operator assembly are shared with the
    solver. Returns un-shifted densities of shape (N+1, m, 2D).
    """
    if solver.pl.alpha != 1.0:
        raise ValueError("the independent linear solver needs alpha = 1")
    space, ctx = solver.space, solver.ctx
    D, m, N, sigma = solver.D, solver.m, ctx.N, solver.sigma
    P = assemble_pairing(space)
    M = assemble_mass(space)
    half = 0.5 * P

    def symbol(s):
        V, K = assemble_layer_operators(space, [s + sigma], solver.config.assembly)
        return np.block([[-V[0], K[0] - half], [-K[0] - half, -V[0]]])

    W = cq.cq_weights(ctx, symbol, shape=(2 * D, 2 * D)).real  # (N+1, m, m, 2D, 2D)
    Wf = W.transpose(0, 1, 3, 2, 4).reshape(N + 1, m * 2 * D, m * 2 * D)
    A = Wf[0].copy()
    for k in range(m):
        A[k * 2 * D:k * 2 * D + D, k * 2 * D:k * 2 * D + D] += M
    lu = sla.lu_factor(A)
    times = ctx.stage_times(N + 1)
    damp = np.exp(-sigma * times)
    q = space.quadrature()
    nu = space.mesh.normals[:, None, :]
    U = np.zeros((N + 1, m * 2 * D))
    for n in range(N + 1):
        r = np.zeros((m, 2 * D))
        for k in range(m):
            E_inc, H_inc = solver.wave.fields(times[n, k], q.points)
            local = -np.einsum("fq,fqx,fqax->fa", q.weights, E_inc, q.basis)
            r[k, :D] = np.bincount(space.dofs.ravel(), local.ravel(), minlength=D)
            r[k, :D] -= assemble_nonlinear_residual(space, PowerLaw(1.0), np.zeros(D), np.cross(H_inc, nu))
            r[k] *= damp[n, k]
        rhs = r.reshape(-1)
        for j in range(n):
            rhs = rhs - Wf[n - j] @ U[j]
        U[n] = sla.lu_solve(lu, rhs)
    return U.reshape(N + 1, m, 2 * D) / damp[:, :, None]


@_timed
def check_linear_equivalence(n: int = 1, N: int = 32, c: float = 10.0, tol: float = 1e-10) -> CheckResult:
    """alpha = 1: one Newton iteration per step and agreement with the explicit-weight solver."""
    space = build_rt_space(make_cube_mesh(center=(0.75, 0.0, 0.0), n=n))
    solver = build_solver(SolverConfig(alpha=1.0, m=2, N=N), space, IncidentWave(c=c))
    hist = solver.run()
    ref = independent_linear_history(solver)
    got = np.concatenate([hist.phi, hist.psi], axis=2)
    diff = float(np.abs(got - ref).max() / np.abs(ref).max())
    one_iter = all(k == 1 for k in hist.newton_iterations)
    return CheckResult("alpha1_linear_equivalence", bool(one_iter and diff < tol), diff, tol,
                       {"newton_iterations": sorted(set(hist.newton_iterations))})


def history_bytes(hist: DensityHistory) -> bytes:
    return hist.phi.tobytes() + hist.psi.tobytes()


@_timed
def check_zero_data_and_determinism(n: int = 1, N: int = 16) -> CheckResult:
    space = build_rt_space(make_cube_mesh(center=(0.75, 0.0, 0.0), n=n))
    cfg = SolverConfig(alpha=0.5, m=2, N=N)
    zero = build_solver(cfg, space, IncidentWave(amplitude=0.0)).run()
    zero_max = float(max(np.abs(zero.phi).max(), np.abs(zero.psi).max()))
    runs = [history_bytes(build_solver(cfg, space, IncidentWave(c=10.0)).run()) for _ in range(2)]
    same = runs[0] == runs[1]
    return CheckResult("zero_data_determinism", bool(zero_max == 0.0 and same), zero_max, 0.0,
                       {"byte_identical": bool(same)})


@_timed
def check_causality(n: int = 4, N: int = 64, c: float = 100.0, point=(0.0, 0.0, 0.0),
                    center=(0.75, 0.0, 0.0), tol: float = 1e-6) -> CheckResult:
    """Scattered field at ``point`` before the incident pulse can reach it via the scatterer."""
    from .maxwell_kernels import point_triangle_distance

    mesh = make_cube_mesh(center=center, n=n)
    space = build_rt_space(mesh)
    wave = IncidentWave(c=c)
    solver = build_solver(SolverConfig(alpha=0.5, m=2, N=N), space, wave)
    hist = solver.run()
    pts = np.asarray(point, float)[None]
    fields = solver.evaluate_fields(hist, pts)
    d = float(point_triangle_distance(pts[0], mesh.corners).min())
    t_arr = wave.arrival_time(mesh.vertices) + d
    mag = np.linalg.norm(fields.E[:, :, 0], axis=-1)
    early = fields.times < t_arr
    worst = float(mag[early].max()) if early.any() else 0.0
    return CheckResult("causality", worst < tol, worst, tol,
                       {"arrival_time": t_arr, "peak": float(mag.max()), "n_early": int(early.sum())})


SUITE = {
    "nonlinearity": check_nonlinearity_inequalities,
    "inverse": check_inverse_roundtrip,
    "cq_orders": check_cq_orders,
    "partial_integration": check_partial_integration,
    "coercivity": check_coercivity,
    "calderon_positivity": check_calderon_positivity,
    "calderon_projector": check_calderon_projector,
    "antisymmetry": check_pairing_antisymmetry,
    "pde_residual": check_pde_residual,
    "linear_equivalence": check_linear_equivalence,
    "zero_data": check_zero_data_and_determinism,
    "causality": check_causality,
}


def run_suite(selection=None, log=None) -> list[CheckResult]:
    names = list(SUITE) if not selection else list(selection)
    unknown = [n for n in names if n not in SUITE]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}; available: {', '.join(SUITE)}")
    out = []
    for name in names:
        res = SUITE[name]()
        if log is not None:
            log(res.line())
        out.append(res)
    return out
