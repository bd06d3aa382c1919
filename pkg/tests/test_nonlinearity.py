import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nlscat.checks import monotonicity_gaps
from nlscat.nonlinearity import (
    PowerLaw,
    a_eval,
    a_inv,
    a_jacobian,
    assemble_nonlinear_jacobian,
    assemble_nonlinear_residual,
    weighted_gram,
)
from nlscat.rt_space import assemble_mass, build_rt_space, eval_coefficients
from nlscat.quadrature import radon7
from nlscat.surface_mesh import make_cube_mesh

alphas = st.sampled_from([0.1, 0.3, 0.5, 0.9, 1.0])
vec = arrays(float, 3, elements=st.floats(-1e3, 1e3))


def test_power_law_validation():
    """[TRIVIAL] alpha outside (0, 1] and large regularizations are rejected."""
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            PowerLaw(bad)
    with pytest.raises(ValueError):
        PowerLaw(0.5, reg_eps=1e-3)


def test_values():
    """[TRIVIAL] |a(x)| = |x|^alpha along the direction of x; a(0) = 0."""
    pl = PowerLaw(0.5)
    np.testing.assert_allclose(a_eval(pl, [4.0, 0.0, 0.0]), [2.0, 0.0, 0.0])
    np.testing.assert_allclose(a_eval(pl, [0.0, 3.0, 4.0]), np.array([0.0, 3.0, 4.0]) / np.sqrt(5.0))
    assert np.all(a_eval(pl, np.zeros((2, 3))) == 0)
    np.testing.assert_array_equal(a_eval(PowerLaw(1.0), [1.0, -2.0, 3.0]), [1.0, -2.0, 3.0])


@given(alpha=alphas, u=vec, v=vec)
def test_monotonicity_and_hoelder(alpha, u, v):
    """[PAPER] strong monotonicity with modulus alpha (|u|+|v|)^(alpha-1) and Hoelder constant 2."""
    assume(np.linalg.norm(u) + np.linalg.norm(v) > 1e-12)
    mono, hold = monotonicity_gaps(alpha, u[None], v[None])
    assert mono[0][0] >= -1e-13 * mono[1][0]
    assert hold[0][0] >= -1e-13 * hold[1][0]


@given(alpha=alphas, x=vec, lam=st.floats(1e-3, 1e3))
def test_homogeneity(alpha, x, lam):
    """[DERIVED] a(lam x) = lam^alpha a(x) and a is odd."""
    pl = PowerLaw(alpha)
    np.testing.assert_allclose(a_eval(pl, lam * x), lam**alpha * a_eval(pl, x), rtol=1e-12, atol=1e-300)
    np.testing.assert_array_equal(a_eval(pl, -x), -a_eval(pl, x))


@given(alpha=alphas, x=vec.filter(lambda x: not 0 < np.linalg.norm(x) < 1e-30))
def test_inverse(alpha, x):
    """[DERIVED] a^-1(y) = |y|^(1/alpha - 1) y inverts a (away from the underflow range of |y|^(1/alpha))."""
    pl = PowerLaw(alpha)
    np.testing.assert_allclose(a_inv(pl, a_eval(pl, x)), x, rtol=1e-12, atol=1e-290)


@given(alpha=alphas, x=vec.filter(lambda x: np.linalg.norm(x) > 1e-3))
def test_jacobian_matches_finite_differences(alpha, x):
    """[DERIVED] central differences of a; the Jacobian is symmetric positive definite."""
    pl = PowerLaw(alpha, reg_eps=0.0)
    J = a_jacobian(pl, x)
    h = 1e-6 * np.linalg.norm(x)
    fd = np.column_stack([(a_eval(pl, x + h * e) - a_eval(pl, x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-7 * np.abs(J).max())
    np.testing.assert_allclose(J, J.T)
    # eigenvalues alpha |x|^(alpha-1) (radial) and |x|^(alpha-1) (tangential, twice)
    r = np.linalg.norm(x)
    np.testing.assert_allclose(np.linalg.eigvalsh(J), sorted([alpha * r ** (alpha - 1), r ** (alpha - 1), r ** (alpha - 1)]),
                               rtol=1e-10)


def test_jacobian_at_zero():
    """[TRIVIAL] unregularized Jacobian at 0 is undefined, the regularized one is finite."""
    with pytest.raises(ZeroDivisionError):
        a_jacobian(PowerLaw(0.5, reg_eps=0.0), np.zeros(3))
    J = a_jacobian(PowerLaw(0.5, reg_eps=1e-8), np.zeros(3))
    np.testing.assert_allclose(J, 1e-8 ** -0.5 * np.eye(3))
    # explicit override wins over the configured value
    np.testing.assert_allclose(a_jacobian(PowerLaw(0.5, reg_eps=0.0), np.zeros(3), reg_eps=1e-4), 100 * np.eye(3))


SPACE = build_rt_space(make_cube_mesh(n=2))


def test_linear_residual_is_mass_matrix():
    """[DERIVED] for alpha = 1 the Galerkin term is M c (plus the projected incident trace)."""
    rng = np.random.default_rng(0)
    c = rng.standard_normal(SPACE.n_dofs)
    M = assemble_mass(SPACE)
    np.testing.assert_allclose(assemble_nonlinear_residual(SPACE, PowerLaw(1.0), c), M @ c, atol=1e-13)
    np.testing.assert_allclose(assemble_nonlinear_jacobian(SPACE, PowerLaw(1.0), c), M, atol=1e-14)
    inc = eval_coefficients(SPACE, c)
    np.testing.assert_allclose(assemble_nonlinear_residual(SPACE, PowerLaw(1.0), 0 * c, inc), M @ c, atol=1e-13)


def test_residual_batch_axes():
    """[TRIVIAL] leading batch axes are processed independently."""
    rng = np.random.default_rng(1)
    c = rng.standard_normal((2, 3, SPACE.n_dofs))
    pl = PowerLaw(0.5)
    batched = assemble_nonlinear_residual(SPACE, pl, c)
    np.testing.assert_allclose(batched[1, 2], assemble_nonlinear_residual(SPACE, pl, c[1, 2]), rtol=1e-14)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9])
def test_galerkin_jacobian_directional_derivative(alpha):
    """[DERIVED] J d approximates the difference quotient of the residual."""
    rng = np.random.default_rng(2)
    pl = PowerLaw(alpha, reg_eps=0.0)
    c, d = rng.standard_normal((2, SPACE.n_dofs))
    inc = np.broadcast_to([0.3, 0.2, -0.1], SPACE.quadrature().points.shape)
    h = 1e-6
    fd = (assemble_nonlinear_residual(SPACE, pl, c + h * d, inc)
          - assemble_nonlinear_residual(SPACE, pl, c - h * d, inc)) / (2 * h)
    J = assemble_nonlinear_jacobian(SPACE, pl, c, inc)
    np.testing.assert_allclose(J @ d, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())
    np.testing.assert_allclose(J, J.T, atol=1e-13)
    assert np.linalg.eigvalsh(J).min() > 0


def test_weighted_gram_identity_is_mass():
    """[TRIVIAL]"""
    q = SPACE.quadrature()
    eye = np.broadcast_to(np.eye(3), q.points.shape[:2] + (3, 3))
    np.testing.assert_allclose(weighted_gram(SPACE, eye), assemble_mass(SPACE), atol=1e-15)


@given(alpha=alphas, seed=st.integers(0, 2**31))
def test_galerkin_monotonicity(alpha, seed):
    """[DERIVED] pointwise monotonicity carries over: (c - d) . (r(c) - r(d)) >= 0."""
    rng = np.random.default_rng(seed)
    c, d = rng.standard_normal((2, SPACE.n_dofs))
    pl = PowerLaw(alpha)
    gap = (c - d) @ (assemble_nonlinear_residual(SPACE, pl, c) - assemble_nonlinear_residual(SPACE, pl, d))
    assert gap >= 0


def test_reference_values():
    """[DERIVED] a((3,4,0)) = (3,4,0)/sqrt 5, unit vectors are fixed by a^-1, Jacobian spectrum at e_1."""
    pl = PowerLaw(0.5, reg_eps=0.0)
    np.testing.assert_allclose(a_eval(pl, [3.0, 4.0, 0.0]), np.array([3.0, 4.0, 0.0]) / np.sqrt(5.0), rtol=1e-15)
    for e in np.eye(3):
        np.testing.assert_allclose(a_inv(pl, e), e, rtol=1e-15)
    np.testing.assert_allclose(np.linalg.eigvalsh(a_jacobian(pl, [1.0, 0.0, 0.0])), [0.5, 1.0, 1.0], rtol=1e-15)


def test_zero_coefficients_give_zero_residual():
    """[TRIVIAL]"""
    r = assemble_nonlinear_residual(SPACE, PowerLaw(0.3), np.zeros(SPACE.n_dofs))
    assert np.all(r == 0)


def loop_residual(space, alpha, coeffs, field):
    """Triangle-by-triangle residual rebuilt from corner coordinates and the 7-point rule."""
    rule = radon7()
    mesh = space.mesh
    r = np.zeros(space.n_dofs)
    for t in range(mesh.n_triangles):
        p = mesh.corners[t]
        area = 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0]))
        # local function k lives on the edge opposite corner k
        lengths = [np.linalg.norm(p[(k + 2) % 3] - p[(k + 1) % 3]) for k in range(3)]
        for b, w in zip(rule.bary, rule.weights):
            x = b @ p
            f = [space.signs[t, k] * lengths[k] / (2 * area) * (x - p[k]) for k in range(3)]
            u = sum(coeffs[space.dofs[t, k]] * f[k] for k in range(3)) + field(x)
            nu = np.linalg.norm(u)
            au = nu ** (alpha - 1) * u if nu > 0 else 0 * u
            for k in range(3):
                r[space.dofs[t, k]] += w * area * f[k] @ au
    return r


@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0])
def test_residual_against_loop(alpha):
    """[DERIVED] vectorized residual equals an independent per-triangle loop with an incident field."""
    space = build_rt_space(make_cube_mesh(n=1))
    c = np.random.default_rng(1).standard_normal(space.n_dofs)

    def field(x):
        return np.array([np.sin(x[1]), np.cos(x[2]), x[0] * x[1]])

    q = space.quadrature()
    inc = np.apply_along_axis(field, -1, q.points)
    r = assemble_nonlinear_residual(space, PowerLaw(alpha), c, inc)
    np.testing.assert_allclose(r, loop_residual(space, alpha, c, field), rtol=0, atol=1e-12 * np.abs(r).max())
