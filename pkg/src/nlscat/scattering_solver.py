"""Time stepping of the fully discrete nonlinear boundary integral equation.

Unknowns per step are the stage blocks of ``phi = gamma_T H`` and
``psi = -gamma_T E`` (scattered fields), stored as real arrays of shape
(m, D). Step ``n`` solves

    sum_{j<=n} W_{n-j} u_j + [N(phi_n); 0] = [r_n; 0]

where ``W_k`` are the CQ weights of the impedance Calderon block, ``N`` is
the Galerkin power-law term (incident magnetic trace included) and ``r_n``
pairs the incident electric trace with the test functions.

The history sum is never formed from explicit weights. The solver keeps the
operator at the contour frequencies of the upper half circle and updates the
transformed history after each step; one inverse transform per step yields
the convolution. ``W_0`` is synthesized from the same contour sums.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .cq_engine import CQContext, radau_tableau
from .maxwell_kernels import AssemblyOptions, assemble_layer_operators, potential_matrices
from .nonlinearity import PowerLaw, a_jacobian, assemble_nonlinear_residual, weighted_gram
from .rt_space import RTSpace, assemble_mass, assemble_pairing, eval_coefficients, scatter_vector

log = logging.getLogger(__name__)

# largest |s| * h_max at which the default singular quadrature was observed to stay passive
HIGH_FREQUENCY_LIMIT = 500.0


class NewtonError(RuntimeError):
    """Newton iteration failed; ``history`` holds the residual norms."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = list(history)


class AssemblyError(RuntimeError):
    pass


# ---------------------------------------------------------------- incident wave


@dataclass(frozen=True)
class IncidentWave:
    """Gaussian plane pulse ``E = A exp(-c (t - d.x + t0)^2) p`` and ``H = (d x p) E / p``.

    With ``t0 < 0`` the pulse starts at distance ``|t0|`` behind the origin
    and travels along ``d`` at unit speed.
    """

    polarization: tuple = (1.0, 0.0, 0.0)
    direction: tuple = (0.0, 0.0, 1.0)
    c: float = 100.0
    t0: float = -2.0
    amplitude: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.polarization, float)
        d = np.asarray(self.direction, float)
        if p.shape != (3,) or d.shape != (3,):
            raise ValueError("polarization and direction must be 3-vectors")
        if abs(np.linalg.norm(p) - 1) > 1e-12 or abs(np.linalg.norm(d) - 1) > 1e-12:
            raise ValueError("polarization and direction must be unit vectors")
        if abs(p @ d) > 1e-12:
            raise ValueError("polarization must be orthogonal to the propagation direction")
        if not self.c > 0:
            raise ValueError(f"pulse sharpness c must be positive, got {self.c}")

    def profile(self, t, x):
        d = np.asarray(self.direction, float)
        u = np.asarray(t) - np.asarray(x) @ d + self.t0
        return self.amplitude * np.exp(-self.c * u**2)

    def fields(self, t, x):
        """``(E, H)`` at times ``t`` (broadcast against ``x[..., 0]``) and points ``x``."""
        f = self.profile(t, x)[..., None]
        p = np.asarray(self.polarization, float)
        q = np.cross(np.asarray(self.direction, float), p)
        return f * p, f * q

    def arrival_time(self, points, threshold: float = 1e-6) -> float:
        """Earliest time at which ``|E|`` exceeds ``threshold`` at any of ``points``."""
        if self.amplitude == 0:
            return np.inf
        half_width = np.sqrt(np.log(abs(self.amplitude) / threshold) / self.c) if abs(self.amplitude) > threshold else 0.0
        proj = np.atleast_2d(points) @ np.asarray(self.direction, float)
        return float(proj.min() - self.t0 - half_width)


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.5
    m: int = 2
    N: int = 64
    T: float = 3.0
    shift: float | None = None  # None -> 0 for m <= 2, 1/T otherwise
    allow_unshifted: bool = False
    reg_eps: float = 1e-10
    newton_tol_rel: float = 1e-9
    newton_tol_abs: float = 1e-12
    newton_max_iter: int = 50
    max_halvings: int = 30
    contour_eps: float = 1e-14
    contour_oversample: int = 1
    assembly: AssemblyOptions = field(default_factory=AssemblyOptions)

    def __post_init__(self):
        PowerLaw(self.alpha, self.reg_eps)  # validates both
        if self.m not in (1, 2, 3):
            raise ValueError(f"m must be 1, 2 or 3, got {self.m}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.shift is not None and self.shift < 0:
            raise ValueError(f"shift must be non-negative, got {self.shift}")
        if self.m > 2 and self.sigma == 0 and not self.allow_unshifted:
            raise ValueError("m > 2 requires a positive shift (or allow_unshifted=True)")
        if self.contour_oversample < 1:
            raise ValueError("contour_oversample must be >= 1")

    @property
    def sigma(self) -> float:
        if self.shift is not None:
            return float(self.shift)
        return 0.0 if self.m <= 2 else 1.0 / self.T

    @property
    def tau(self) -> float:
        # N = 0 is a single step of length T
        return self.T / self.N if self.N else self.T

    @property
    def power_law(self) -> PowerLaw:
        return PowerLaw(self.alpha, self.reg_eps)


# ---------------------------------------------------------------- results


@dataclass
class DensityHistory:
    """Un-shifted stage densities for steps ``0..n_steps-1``."""

    times: np.ndarray  # (n, m)
    phi: np.ndarray  # (n, m, D)
    psi: np.ndarray
    b: np.ndarray  # stage weights of the tableau
    tau: float
    newton_iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.phi.shape[0]


@dataclass
class FieldSamples:
    points: np.ndarray  # (P, 3)
    times: np.ndarray  # (n, m)
    E: np.ndarray  # (n, m, P, 3)
    H: np.ndarray


# ---------------------------------------------------------------- solver


class ScatteringSolver:
    """Operator cache, step matrix and time loop for one configuration."""

    def __init__(self, config: SolverConfig, space: RTSpace, wave: IncidentWave):
        self.config = config
        self.space = space
        self.wave = wave
        self.pl = config.power_law
        self.sigma = config.sigma
        tab = radau_tableau(config.m)
        self.ctx = CQContext(tab, config.tau, config.N, eps=config.contour_eps,
                             n_contour=config.contour_oversample * (config.N + 1))
        self.n_steps = config.N + 1
        self.m = config.m
        self.D = space.n_dofs
        ctx = self.ctx
        self.half = ctx.half_indices
        self.z = ctx.rho * np.exp(2j * np.pi * self.half / ctx.M)  # contour points
        # conjugate pairs counted twice
        self.cw = np.full(len(self.half), 2.0)
        self.cw[0] = 1.0
        if ctx.M % 2 == 0:
            self.cw[-1] = 1.0
        self.E = ctx.eigvecs[self.half]
        self.Einv = ctx.eigvecs_inv[self.half]
        self.freqs = ctx.frequencies(self.sigma)[self.half]  # (L, m)
        # the fixed-order singular quadrature loses passivity at |s| h >> 1
        kh = float(np.abs(self.freqs).max() * space.mesh.diameters.max())
        if kh > HIGH_FREQUENCY_LIMIT:
            log.warning("max |s| h = %.0f exceeds %.0f: the step size is small for this mesh and the "
                        "time stepping may become unstable; refine the mesh or increase tau",
                        kh, HIGH_FREQUENCY_LIMIT)

        t0 = time.perf_counter()
        V, K = assemble_layer_operators(space, self.freqs.ravel(), config.assembly)
        bad = ~np.isfinite(V).all(axis=(1, 2)) | ~np.isfinite(K).all(axis=(1, 2))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise AssemblyError(f"non-finite operator at frequency index {k} (s = {self.freqs.ravel()[k]})")
        L, m, D = len(self.half), self.m, self.D
        self.V = V.reshape(L, m, D, D)
        self.K = K.reshape(L, m, D, D)
        self.P = assemble_pairing(space)
        self.mass = assemble_mass(space)
        log.info("assembled %d frequencies (D=%d) in %.1fs", L * m, D, time.perf_counter() - t0)

        self.W0 = self._synthesize_w0()
        self._factor_step_matrix()
        self._prepare_incident()
        self.reset()

    # ---------------------------------------------------------------- operator algebra

    def _apply_block(self, V, K, v):
        """Impedance Calderon block applied to v (..., 2D) with per-frequency V, K."""
        D = self.D
        a, b = v[..., :D], v[..., D:]
        Va = (V @ a[..., None])[..., 0]
        Vb = (V @ b[..., None])[..., 0]
        Ka = (K @ a[..., None])[..., 0]
        Kb = (K @ b[..., None])[..., 0]
        Pa, Pb = a @ self.P.T, b @ self.P.T
        return np.concatenate([-Va + Kb - 0.5 * Pb, -Ka - 0.5 * Pa - Vb], axis=-1)

    def block_matrix(self, V, K) -> np.ndarray:
        """Dense ``[[-V, K - P/2], [-K - P/2, -V]]``."""
        half = 0.5 * self.P
        return np.block([[-V, K - half], [-K - half, -V]])

    def _synthesize_w0(self) -> np.ndarray:
        """``W_0`` as (m*2D, m*2D) real matrix from the contour sums."""
        m, D2 = self.m, 2 * self.D
        W = np.zeros((m, D2, m, D2), complex)
        for l in range(len(self.half)):
            for k in range(m):
                R = np.outer(self.E[l, :, k], self.Einv[l, k, :])  # (m, m)
                B = self.block_matrix(self.V[l, k], self.K[l, k])
                W += self.cw[l] * R[:, None, :, None] * B[None, :, None, :]
        W /= self.ctx.M
        return W.real.reshape(m * D2, m * D2)

    def direct_w0(self, options: AssemblyOptions | None = None) -> np.ndarray:
        """``W_0 = C_imp(A^-1 / tau + sigma)`` by direct assembly at the eigenvalues of ``A^-1``."""
        tab = self.ctx.tableau
        lam, E = np.linalg.eig(tab.A_inv)
        Einv = np.linalg.inv(E)
        s = lam / self.ctx.tau + self.sigma
        V, K = assemble_layer_operators(self.space, s, options or self.config.assembly)
        m, D2 = self.m, 2 * self.D
        W = np.zeros((m, D2, m, D2), complex)
        for k in range(m):
            R = np.outer(E[:, k], Einv[k, :])
            W += R[:, None, :, None] * self.block_matrix(V[k], K[k])[None, :, None, :]
        return W.real.reshape(m * D2, m * D2)

    def _factor_step_matrix(self):
        m, D = self.m, self.D
        W = self.W0.reshape(m, 2, D, m, 2, D)
        Wpp = W[:, 0, :, :, 0, :].reshape(m * D, m * D)
        Wps = W[:, 0, :, :, 1, :].reshape(m * D, m * D)
        Wsp = W[:, 1, :, :, 0, :].reshape(m * D, m * D)
        Wss = W[:, 1, :, :, 1, :].reshape(m * D, m * D)
        try:
            self._lu_ss = sla.lu_factor(Wss)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise AssemblyError("psi block of the step matrix is singular") from exc
        self._Wps = Wps
        self._Wsp = Wsp
        self.schur = Wpp - Wps @ sla.lu_solve(self._lu_ss, Wsp)

    def _prepare_incident(self):
        """Incident data at all stage times: pairing vectors and magnetic traces."""
        q = self.space.quadrature()
        nu = self.space.mesh.normals[:, None, :]
        times = self.ctx.stage_times(self.n_steps)
        self.times = times
        n, m = times.shape
        F, Q = q.weights.shape
        self.rhs_data = np.zeros((n, m, self.D))
        self.h_trace = np.zeros((n, m, F, Q, 3))
        for i in range(n):
            for k in range(m):
                Einc, Hinc = self.wave.fields(times[i, k], q.points)
                # [gamma_T E, b_i] = int ((E x nu) x nu) . b_i = -int E_tan . b_i
                local = -np.einsum("fq,fqx,fqax->fa", q.weights, Einc, q.basis)
                self.rhs_data[i, k] = scatter_vector(self.space, local)
                self.h_trace[i, k] = np.cross(Hinc, nu)
        self.damp = np.exp(-self.sigma * times)  # (n, m)
        # int |b_i|, used for the rounding floor of the nonlinear term
        self._basis_l1 = scatter_vector(self.space, np.einsum("fq,fqa->fa", q.weights, np.linalg.norm(q.basis, axis=-1)))

    # ---------------------------------------------------------------- time loop

    def reset(self):
        L, m = len(self.half), self.m
        self._Y = np.zeros((L, m, 2 * self.D), complex)
        self._u = np.zeros((self.n_steps, m, 2 * self.D))  # shifted densities
        self._iters = []
        self._res = []
        self.n_done = 0

    def history_term(self, n: int) -> np.ndarray:
        """``sum_{j<n} W_{n-j} u_j`` as (m, 2D) real array."""
        if n == 0:
            return np.zeros((self.m, 2 * self.D))
        fac = self.cw * self.z ** (-n)
        return (np.einsum("l,lix->ix", fac, self._Y) / self.ctx.M).real

    def _push(self, n: int, u: np.ndarray):
        v = np.einsum("lkj,jx->lkx", self.Einv, u.astype(complex)) * (self.z**n)[:, None, None]
        y = self._apply_block(self.V, self.K, v)
        self._Y += np.einsum("ljk,lkx->ljx", self.E, y)

    def _nonlinear(self, n: int, phi):
        """Shifted nonlinear term per stage, (m, D)."""
        g = self.damp[n][:, None]
        return g * assemble_nonlinear_residual(self.space, self.pl, phi / g, self.h_trace[n])

    def _state(self, n: int, phi):
        """Unshifted total magnetic trace at quadrature points, (m, F, Q, 3)."""
        return eval_coefficients(self.space, phi / self.damp[n][:, None]) + self.h_trace[n]

    def _pointwise_jacobian(self, u):
        # the power law is homogeneous, so the regularization scales with the state
        umax = np.sqrt(np.einsum("...i,...i->...", u, u).max())
        # an identically zero state (zero data) only needs some finite tangent
        reg = self.pl.reg_eps * umax if umax > 0 else 1.0
        return a_jacobian(self.pl, u, reg_eps=reg)

    def _assemble_jacobian(self, Da) -> np.ndarray:
        """Block-diagonal Jacobian of the shifted nonlinear term (the shift cancels)."""
        m, D = self.m, self.D
        J = np.zeros((m * D, m * D))
        for k in range(m):
            J[k * D:(k + 1) * D, k * D:(k + 1) * D] = weighted_gram(self.space, Da[k])
        return J

    def _rounding_floor(self, n: int, phi) -> float:
        """Residual level set by rounding of the state where the total trace vanishes.

        A state known to ``eps * max|u|`` leaves ``(eps * max|u|)^alpha`` in the
        power law, far above ``eps`` for small alpha.
        """
        u = self._state(n, phi.reshape(self.m, self.D))
        umax = np.sqrt(np.einsum("...i,...i->...", u, u).max(axis=(1, 2)))  # per stage
        level = (np.finfo(float).eps * umax) ** self.pl.alpha * self.damp[n]
        return float(np.linalg.norm(level[:, None] * self._basis_l1[None, :]))

    def _nonlinear_jacobian(self, n: int, phi):
        return self._assemble_jacobian(self._pointwise_jacobian(self._state(n, phi)))

    def _newton_direction(self, n: int, phi, F):
        """Newton update with a secant safeguard at sign-crossing quadrature points.

        Where the linearized update would carry the local state through zero,
        the tangent of the power law badly underestimates its growth; there the
        isotropic secant slope ``|u|^(alpha-1) I`` is used instead.
        """
        m, D = self.m, self.D
        u = self._state(n, phi.reshape(m, D))
        Da = self._pointwise_jacobian(u)
        delta = np.linalg.solve(self.schur + self._assemble_jacobian(Da), -F)
        if self.pl.alpha == 1.0:
            return delta
        du = eval_coefficients(self.space, delta.reshape(m, D) / self.damp[n][:, None])
        cross = np.einsum("...i,...i->...", u, u + du) < 0
        if cross.any():
            r2 = np.einsum("...i,...i->...", u[cross], u[cross])
            r2 = r2 + (self.pl.reg_eps**2) * r2.max()
            Da[cross] = (r2 ** ((self.pl.alpha - 1.0) / 2))[:, None, None] * np.eye(3)
            delta = np.linalg.solve(self.schur + self._assemble_jacobian(Da), -F)
        return delta

    def step(self, n: int) -> np.ndarray:
        """Solve step ``n`` (steps ``0..n-1`` must be done); returns the shifted (m, 2D) block."""
        if n != self.n_done:
            raise ValueError(f"steps must be solved in order: expected {self.n_done}, got {n}")
        m, D = self.m, self.D
        cfg = self.config
        rhs = -self.history_term(n)
        rhs[:, :D] += self.damp[n][:, None] * self.rhs_data[n]
        r_phi = rhs[:, :D].reshape(-1)
        r_psi = rhs[:, D:].reshape(-1)
        r_tilde = r_phi - self._Wps @ sla.lu_solve(self._lu_ss, r_psi)
        # the incident magnetic trace enters through the nonlinearity, so its
        # image counts towards the data scale
        n_inc = self._nonlinear(n, np.zeros((m, D)))
        scale = max(np.linalg.norm(rhs), np.linalg.norm(n_inc))
        tol = cfg.newton_tol_abs + cfg.newton_tol_rel * scale

        def residual(phi_flat):
            return self.schur @ phi_flat + self._nonlinear(n, phi_flat.reshape(m, D)).reshape(-1) - r_tilde

        phi = np.tile(self._u[n - 1, -1, :D], m) if n > 0 else np.zeros(m * D)
        F = residual(phi)
        norm = np.linalg.norm(F)
        hist = [norm]
        it = 0
        while True:
            delta = self._newton_direction(n, phi, F)
            lam = 1.0
            trial = phi + delta
            F_new = residual(trial)
            stalled = False
            if norm > tol:
                halvings = 0
                while not np.linalg.norm(F_new) < norm:
                    halvings += 1
                    if halvings > cfg.max_halvings:
                        stalled = True
                        break
                    lam *= 0.5
                    trial = phi + lam * delta
                    F_new = residual(trial)
            if stalled:
                # no descent left: acceptable only at the rounding level of the state
                if norm <= tol + self._rounding_floor(n, phi):
                    break
                raise NewtonError(f"step {n}: damping underflow after {cfg.max_halvings} halvings", hist)
            prev = norm
            phi, F = trial, F_new
            norm = np.linalg.norm(F)
            hist.append(norm)
            it += 1
            if norm <= tol:
                break
            # slow progress inside the rounding floor means the iteration has stagnated there
            if norm > 0.25 * prev and norm <= tol + self._rounding_floor(n, phi):
                break
            if it >= cfg.newton_max_iter:
                if norm <= tol + self._rounding_floor(n, phi):
                    break
                raise NewtonError(f"step {n}: no convergence in {it} iterations (|R| = {norm:.3e})", hist)
        psi = sla.lu_solve(self._lu_ss, r_psi - self._Wsp @ phi)
        u = np.concatenate([phi.reshape(m, D), psi.reshape(m, D)], axis=1)
        self._u[n] = u
        self._push(n, u)
        self._iters.append(it)
        self._res.append(hist)
        self.n_done += 1
        return u

    def run(self) -> DensityHistory:
        t0 = time.perf_counter()
        for n in range(self.n_done, self.n_steps):
            self.step(n)
        log.info("time loop of %d steps in %.1fs", self.n_steps, time.perf_counter() - t0)
        return self.history()

    def history(self) -> DensityHistory:
        n = self.n_done
        grow = 1.0 / self.damp[:n, :, None]
        u = self._u[:n] * grow
        return DensityHistory(
            times=self.times[:n].copy(),
            phi=u[:, :, : self.D].copy(),
            psi=u[:, :, self.D:].copy(),
            b=self.ctx.tableau.b.copy(),
            tau=self.ctx.tau,
            newton_iterations=list(self._iters),
            residuals=[list(h) for h in self._res],
        )

    # ---------------------------------------------------------------- fields

    def evaluate_fields(self, history: DensityHistory, points, **kwargs) -> FieldSamples:
        """Scattered fields at exterior points for every step and stage."""
        pts = np.atleast_2d(np.asarray(points, float))
        ctx, m, D = self.ctx, self.m, self.D
        n = history.n_steps
        damp = self.damp[:n, :, None]
        u = np.concatenate([history.phi, history.psi], axis=2) * damp  # shifted
        spec = ctx.forward(u.astype(complex))[self.half]  # (L, m, 2D)
        Smat, Dmat = potential_matrices(self.space, self.freqs.ravel(), pts, **kwargs)
        L = len(self.half)
        Smat = Smat.reshape(L, m, len(pts) * 3, D)
        Dmat = Dmat.reshape(L, m, len(pts) * 3, D)
        v = np.einsum("lkj,ljx->lkx", self.Einv, spec)
        a, b = v[..., :D, None], v[..., D:, None]
        Ek = (-(Smat @ a) + Dmat @ b)[..., 0]
        Hk = (-(Dmat @ a) - Smat @ b)[..., 0]
        out = []
        for Y in (Ek, Hk):
            half_spec = np.einsum("ljk,lkx->ljx", self.E, Y)
            full = np.empty((ctx.M,) + half_spec.shape[1:], complex)
            full[self.half] = half_spec
            rest = np.arange(len(self.half), ctx.M)
            full[rest] = np.conj(half_spec[ctx.conjugate_index(rest)])
            vals = ctx.backward(full, n).real / damp
            out.append(vals.reshape(n, m, len(pts), 3))
        return FieldSamples(pts, history.times.copy(), out[0], out[1])


def build_solver(config: SolverConfig, space: RTSpace, wave: IncidentWave) -> ScatteringSolver:
    return ScatteringSolver(config, space, wave)


# ---------------------------------------------------------------- error measures


def _common_endpoints(a: DensityHistory, b: DensityHistory, T: float | None):
    """Index arrays selecting the last-stage values of both histories at shared times."""
    ratio = a.tau / b.tau
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise ValueError("time grids are not nested (tau_a must be an integer multiple of tau_b)")
    ia = np.arange(a.n_steps)
    ib = (ia + 1) * k - 1
    keep = ib < b.n_steps
    if T is not None:
        keep &= a.times[ia, -1] <= T + 1e-12 * T
    return ia[keep], ib[keep], k


def error_norms(a: DensityHistory, b: DensityHistory, space: RTSpace, T: float | None = None,
                fields_a: FieldSamples | None = None, fields_b: FieldSamples | None = None) -> dict:
    """Discrete ``L2(0,T; L2(Gamma))`` differences of phi and psi (and of point fields).

    Same grids use all stages with the tableau weights; nested grids with
    ``tau_a = k tau_b`` compare the step end points (last stage, ``c_m = 1``).
    """
    if a.phi.shape[2] != b.phi.shape[2]:
        raise ValueError("histories live on different spaces")
    M = assemble_mass(space)
    same = a.phi.shape == b.phi.shape and abs(a.tau - b.tau) <= 1e-14 * a.tau
    if same:
        idx_a = idx_b = np.arange(a.n_steps)
        if T is not None:
            idx_a = idx_b = idx_a[a.times[:, -1] <= T + 1e-12 * T]
        w = a.b
        sel_a = sel_b = slice(None)
    else:
        idx_a, idx_b, _ = _common_endpoints(a, b, T)
        w = np.ones(1)
        sel_a = sel_b = slice(-1, None)
    out = {}
    for name in ("phi", "psi"):
        d = getattr(a, name)[idx_a][:, sel_a] - getattr(b, name)[idx_b][:, sel_b]
        sq = np.einsum("nix,xy,niy->ni", d, M, d)
        out[name] = float(np.sqrt(a.tau * np.sum(sq * w[None, :])))
    if fields_a is not None and fields_b is not None:
        dE = fields_a.E[idx_a][:, sel_a] - fields_b.E[idx_b][:, sel_b]
        out["E_rms"] = float(np.sqrt(np.mean(np.sum(dE**2, axis=-1))))
        out["E_l2t"] = float(np.sqrt(a.tau * np.sum(np.sum(dE**2, axis=-1).sum(axis=-1) * w[None, :])))
    return out
