import logging

import numpy as np
import pytest

from nlscat.checks import history_bytes, independent_linear_history
from nlscat.cq_engine import cq_weights, radau_tableau
from nlscat.maxwell_kernels import assemble_layer_operators
from nlscat.nonlinearity import PowerLaw, assemble_nonlinear_residual
from nlscat.rt_space import assemble_pairing, build_rt_space, scatter_vector
from nlscat.scattering_solver import (
    HIGH_FREQUENCY_LIMIT,
    IncidentWave,
    NewtonError,
    SolverConfig,
    build_solver,
    error_norms,
)
from nlscat.surface_mesh import make_cube_mesh, make_two_cube_scene

OFFSET = (0.75, 0.0, 0.0)


@pytest.fixture(scope="module")
def space():
    return build_rt_space(make_cube_mesh(center=OFFSET, n=1))


@pytest.fixture(scope="module")
def run_half(space):
    solver = build_solver(SolverConfig(alpha=0.5, m=2, N=24), space, IncidentWave(c=10.0))
    return solver, solver.run()


# ---------------------------------------------------------------- incident wave


def test_wave_validation():
    """[TRIVIAL]"""
    with pytest.raises(ValueError, match="orthogonal"):
        IncidentWave(polarization=(0, 0, 1), direction=(0, 0, 1))
    with pytest.raises(ValueError, match="unit"):
        IncidentWave(polarization=(2, 0, 0))
    with pytest.raises(ValueError):
        IncidentWave(c=0.0)


def test_wave_is_a_plane_wave():
    """[DERIVED] E _|_ d, H = d x E, and the profile travels along d at unit speed."""
    w = IncidentWave(c=10.0)
    x = np.array([[0.2, -0.1, 0.4]])
    E, H = w.fields(1.7, x)
    np.testing.assert_allclose(H, np.cross([0, 0, 1], E))
    assert E[0] @ np.array([0, 0, 1]) == 0
    E2, _ = w.fields(1.7 + 0.3, x + [0, 0, 0.3])
    np.testing.assert_allclose(E2, E)
    # peak at d.x = t + t0
    assert w.profile(2.4, np.array([0.0, 0.0, 0.4])) == pytest.approx(1.0)


def test_arrival_time():
    """[TRIVIAL] the pulse front (|E| = threshold) reaches d.x = z at z - t0 - halfwidth."""
    w = IncidentWave(c=100.0)
    t = w.arrival_time([[0, 0, -0.5], [0, 0, 0.5]], threshold=1e-6)
    assert w.profile(t, np.array([0, 0, -0.5])) == pytest.approx(1e-6, rel=1e-9)
    assert IncidentWave(amplitude=0.0).arrival_time([[0, 0, 0]]) == np.inf


# ---------------------------------------------------------------- configuration


@pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.2}, {"m": 4}, {"N": -1}, {"T": 0.0},
                                {"shift": -1.0}, {"m": 3, "shift": 0.0}, {"contour_oversample": 0}])
def test_config_validation(kw):
    """[TRIVIAL]"""
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_config_defaults():
    """[PAPER] m = 3 is only positive with a shift; the default shift is 1/T."""
    assert SolverConfig(m=2).sigma == 0.0
    assert SolverConfig(m=3, T=4.0).sigma == 0.25
    assert SolverConfig(m=3, shift=0.0, allow_unshifted=True).sigma == 0.0
    assert SolverConfig(N=0, T=2.0).tau == 2.0


# ---------------------------------------------------------------- solver


def test_w0_synthesis_matches_direct_assembly(space):
    """[DERIVED] W_0 from the contour sums equals C_imp(A^-1/tau) assembled at the eigenvalues."""
    solver = build_solver(SolverConfig(N=16, contour_oversample=2), space, IncidentWave(c=10.0))
    direct = solver.direct_w0()
    np.testing.assert_allclose(solver.W0, direct, atol=1e-9 * np.abs(direct).max())


def test_linear_case_matches_explicit_weights(space):
    """[DERIVED] alpha = 1: one Newton step per time step and agreement with an explicit-weight solver."""
    solver = build_solver(SolverConfig(alpha=1.0, N=16), space, IncidentWave(c=10.0))
    hist = solver.run()
    ref = independent_linear_history(solver)
    got = np.concatenate([hist.phi, hist.psi], axis=2)
    assert set(hist.newton_iterations) == {1}
    assert np.abs(got - ref).max() < 1e-10 * np.abs(ref).max()
    with pytest.raises(ValueError):
        independent_linear_history(build_solver(SolverConfig(alpha=0.5, N=2), space, IncidentWave()))


def test_linear_case_with_shift(space):
    """[DERIVED] the shifted formulation returns the same unshifted densities as the explicit solver."""
    solver = build_solver(SolverConfig(alpha=1.0, m=3, N=12), space, IncidentWave(c=10.0))
    hist = solver.run()
    ref = independent_linear_history(solver)
    got = np.concatenate([hist.phi, hist.psi], axis=2)
    assert np.abs(got - ref).max() < 1e-9 * np.abs(ref).max()


def test_nonlinear_run_converges(run_half):
    """[TRIVIAL] every step meets the Newton tolerance within the iteration cap."""
    solver, hist = run_half
    assert hist.n_steps == 25 and hist.phi.shape == (25, 2, solver.D)
    assert max(hist.newton_iterations) < solver.config.newton_max_iter
    assert np.all(np.isfinite(hist.phi)) and np.abs(hist.phi).max() > 0
    np.testing.assert_allclose(hist.times[:, -1], solver.ctx.tau * np.arange(1, 26))


def test_steps_must_be_ordered(space):
    """[TRIVIAL]"""
    solver = build_solver(SolverConfig(N=4), space, IncidentWave(c=10.0))
    with pytest.raises(ValueError, match="in order"):
        solver.step(2)


def test_zero_data_gives_zero(space):
    """[TRIVIAL] Newton from a zero guess stays at zero."""
    hist = build_solver(SolverConfig(N=8), space, IncidentWave(amplitude=0.0)).run()
    assert not hist.phi.any() and not hist.psi.any()


def test_determinism(space):
    """[TRIVIAL] identical configurations produce identical bytes."""
    cfg = SolverConfig(N=8)
    a = build_solver(cfg, space, IncidentWave(c=10.0)).run()
    b = build_solver(cfg, space, IncidentWave(c=10.0)).run()
    assert history_bytes(a) == history_bytes(b)


def test_newton_failure_is_reported(space):
    """[TRIVIAL] an iteration cap of one cannot reach the tolerance for alpha < 1."""
    solver = build_solver(SolverConfig(alpha=0.5, N=8, newton_max_iter=1), space, IncidentWave(c=10.0))
    with pytest.raises(NewtonError) as info:
        solver.run()
    assert len(info.value.history) == 2


def test_field_evaluation_linear_in_densities(run_half):
    """[TRIVIAL] doubling the densities doubles the sampled fields."""
    solver, hist = run_half
    pts = [[-0.5, 0.0, 0.0], [0.75, 0.0, 1.5]]
    f1 = solver.evaluate_fields(hist, pts)
    hist2 = type(hist)(hist.times, 2 * hist.phi, 2 * hist.psi, hist.b, hist.tau)
    f2 = solver.evaluate_fields(hist2, pts)
    np.testing.assert_allclose(f2.E, 2 * f1.E, rtol=1e-12, atol=1e-15)
    assert f1.E.shape == (25, 2, 2, 3)


def test_far_field_is_delayed(run_half):
    """[DERIVED] back-scattered field one unit in front of the cube is negligible before the pulse can arrive.

    The pulse first touches the cube at the arrival time of its vertices and
    needs one more time unit to travel back to the point.
    """
    solver, hist = run_half
    x = np.array([[0.75, 0.0, -1.5]])
    f = solver.evaluate_fields(hist, x)
    arrival = solver.wave.arrival_time(solver.space.mesh.vertices) + 1.0
    mag = np.linalg.norm(f.E[:, :, 0], axis=-1)
    early = hist.times < arrival
    assert early.any() and not early.all()
    assert mag[early].max() < 1e-4 * mag.max()


def test_error_norms(run_half, space):
    """[TRIVIAL] zero against itself; nested grids compare step end points."""
    solver, hist = run_half
    e = error_norms(hist, hist, space)
    assert e["phi"] == 0 and e["psi"] == 0
    fine = build_solver(SolverConfig(alpha=0.5, N=48), space, IncidentWave(c=10.0)).run()
    d = error_norms(hist, fine, space, T=3.0)
    size = error_norms(hist, _zero_like(hist), space)["phi"]
    assert 0 < d["phi"] < 0.5 * size
    with pytest.raises(ValueError, match="nested"):
        error_norms(fine, hist, space)


def _zero_like(h):
    return type(h)(h.times, 0 * h.phi, 0 * h.psi, h.b, h.tau)


def test_high_frequency_warning(caplog):
    """[TRIVIAL] tiny steps on a coarse mesh trigger the passivity warning."""
    space = build_rt_space(make_cube_mesh(n=1))
    with caplog.at_level(logging.WARNING, logger="nlscat.scattering_solver"):
        build_solver(SolverConfig(N=256, T=3.0), space, IncidentWave())
    assert any("max |s| h" in r.message for r in caplog.records)
    assert HIGH_FREQUENCY_LIMIT > 0


def test_single_step_run(space):
    """[TRIVIAL] N = 0 is one step of length T."""
    cfg = SolverConfig(N=0, T=0.5)
    hist = build_solver(cfg, space, IncidentWave(c=10.0)).run()
    assert hist.n_steps == 1 and hist.tau == 0.5
    np.testing.assert_allclose(hist.times[0], 0.5 * radau_tableau(2).c)
    assert np.all(np.isfinite(hist.phi))


def test_quiet_start(space):
    """[TRIVIAL] while all incident traces are below 1e-12 the stage solutions stay at zero.

    For alpha = 1 each such step is one Newton iteration. For alpha < 1 the
    power law lifts a trace of size t to t^alpha, so one iteration is only
    expected while that image is below the absolute tolerance.
    """
    for alpha in (1.0, 0.5):
        solver = build_solver(SolverConfig(alpha=alpha, N=32), space, IncidentWave(c=100.0))
        hist = solver.run()
        trace = np.maximum(np.abs(solver.h_trace).max(axis=(1, 2, 3, 4)), np.abs(solver.rhs_data).max(axis=(1, 2)))
        quiet = ~np.logical_or.accumulate(trace >= 1e-12)  # before the first arrival
        assert quiet.sum() >= 4 and not quiet.all()
        assert np.abs(hist.phi[quiet]).max() < 1e-12 * np.abs(hist.phi).max()
        trivial = quiet & (trace**alpha < solver.config.newton_tol_abs)
        assert trivial.sum() >= 4
        assert all(k == 1 for k, q in zip(hist.newton_iterations, trivial) if q)


def test_residual_of_full_system(space):
    """[DERIVED] the stored densities satisfy the discrete system, re-evaluated from explicit weights.

    The right-hand side is the incident data minus the history convolution.
    The absolute Newton tolerance is switched off, since it would otherwise
    dominate on the first steps where the data are tiny.
    """
    solver = build_solver(SolverConfig(alpha=0.5, m=2, N=32, newton_tol_abs=0.0), space, IncidentWave(c=10.0))
    hist = solver.run()
    ctx, D, m = solver.ctx, solver.D, solver.m
    P = assemble_pairing(space)

    def symbol(s):
        V, K = assemble_layer_operators(space, [s], solver.config.assembly)
        return np.block([[-V[0], K[0] - P / 2], [-K[0] - P / 2, -V[0]]])

    W = cq_weights(ctx, symbol, shape=(2 * D, 2 * D)).real
    U = np.concatenate([hist.phi, hist.psi], axis=2)
    q = space.quadrature()
    nu = space.mesh.normals[:, None, :]
    pl = PowerLaw(0.5)
    worst = 0.0
    for n in range(hist.n_steps):
        lhs = np.einsum("abxy,by->ax", W[0], U[n])
        rhs = -sum((np.einsum("abxy,by->ax", W[n - j], U[j]) for j in range(n)), np.zeros((m, 2 * D)))
        for k in range(m):
            E, H = solver.wave.fields(hist.times[n, k], q.points)
            rhs[k, :D] += scatter_vector(space, -np.einsum("fq,fqx,fqax->fa", q.weights, E, q.basis))
            lhs[k, :D] += assemble_nonlinear_residual(space, pl, hist.phi[n, k], np.cross(H, nu))
        worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    assert worst < 1e-9


@pytest.mark.parametrize("N", [16, 32])
def test_two_cube_three_stage_run_is_stable(N):
    """[PAPER] alpha = 0.5, m = 3 on two cubes stays bounded, and halving tau barely moves the peak."""
    scene = build_rt_space(make_two_cube_scene(n=1))
    wave = IncidentWave(c=10.0)
    sup = []
    for steps in (N, 2 * N):
        hist = build_solver(SolverConfig(alpha=0.5, m=3, N=steps), scene, wave).run()
        assert np.all(np.isfinite(hist.phi)) and np.all(np.isfinite(hist.psi))
        sup.append(max(np.abs(hist.phi).max(), np.abs(hist.psi).max()))
    assert 0.5 < sup[1] / sup[0] < 2.0
    assert sup[0] < 10.0


def test_zero_history_gives_zero_fields(run_half):
    """[TRIVIAL]"""
    solver, hist = run_half
    f = solver.evaluate_fields(_zero_like(hist), [[-0.5, 0.0, 0.0]])
    assert not f.E.any() and not f.H.any()


def test_error_against_double(run_half, space):
    """[TRIVIAL] the distance from h to 2h is the norm of h."""
    _, hist = run_half
    double = type(hist)(hist.times, 2 * hist.phi, 2 * hist.psi, hist.b, hist.tau)
    d = error_norms(hist, double, space)
    size = error_norms(hist, _zero_like(hist), space)
    assert d["phi"] == pytest.approx(size["phi"], rel=1e-14)
    assert d["psi"] == pytest.approx(size["psi"], rel=1e-14)


def test_error_decreases_with_tau(space):
    """[DERIVED] nested-grid errors against a fine reference shrink as tau halves."""
    wave = IncidentWave(c=10.0)
    ref = build_solver(SolverConfig(alpha=0.5, N=96), space, wave).run()
    errs = [error_norms(build_solver(SolverConfig(alpha=0.5, N=N), space, wave).run(), ref, space, T=3.0)["phi"]
            for N in (12, 24, 48)]
    assert errs[0] > errs[1] > errs[2] > 0
