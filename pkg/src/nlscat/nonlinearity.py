"""Power-law boundary nonlinearity ``a(x) = |x|^(alpha-1) x`` on R^3.

All pointwise functions act on the last axis and broadcast over leading
axes. The Galerkin routines take the field at quadrature points as
``u_h + incident``, with the incident trace given by values at the
quadrature points of the space (shape (F, Q, 3)) or by ``None`` for zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rt_space import RTSpace, _scatter_matrix, eval_coefficients, scatter_vector


@dataclass(frozen=True)
class PowerLaw:
    """Exponent ``alpha`` in (0, 1] and Jacobian regularization ``reg_eps``."""

    alpha: float = 0.5
    reg_eps: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.reg_eps < 1e-6:
            raise ValueError(f"reg_eps must lie in [0, 1e-6), got {self.reg_eps}")


def _norm(x):
    return np.sqrt(np.einsum("...i,...i->...", x, x))


def a_eval(pl: PowerLaw, x) -> np.ndarray:
    x = np.asarray(x, float)
    if pl.alpha == 1.0:
        return x.copy()
    r = _norm(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, r ** (pl.alpha - 1.0), 0.0)
    return scale[..., None] * x


def a_inv(pl: PowerLaw, y) -> np.ndarray:
    y = np.asarray(y, float)
    if pl.alpha == 1.0:
        return y.copy()
    r = _norm(y)
    return (r ** ((1.0 - pl.alpha) / pl.alpha))[..., None] * y


def a_jacobian(pl: PowerLaw, x, reg_eps: float | None = None) -> np.ndarray:
    """``Da(x) = (alpha-1) |x|^(alpha-3) x x^T + |x|^(alpha-1) I``.

    With a positive regularization (``reg_eps`` overrides ``pl.reg_eps``) the
    modulus is replaced by ``sqrt(|x|^2 + reg_eps^2)``.
    """
    x = np.asarray(x, float)
    eye = np.eye(3)
    if pl.alpha == 1.0:
        return np.broadcast_to(eye, x.shape + (3,)).copy()
    eps = pl.reg_eps if reg_eps is None else reg_eps
    r2 = np.einsum("...i,...i->...", x, x) + eps**2
    if np.any(r2 == 0):
        raise ZeroDivisionError("Jacobian of the power law is singular at x = 0 (set reg_eps > 0)")
    r = np.sqrt(r2)
    outer = x[..., :, None] * x[..., None, :]
    return ((pl.alpha - 1.0) * r ** (pl.alpha - 3.0))[..., None, None] * outer + (
        r ** (pl.alpha - 1.0)
    )[..., None, None] * eye


def _state(space: RTSpace, coeffs, incident):
    u = eval_coefficients(space, coeffs)
    if incident is not None:
        u = u + incident
    return u


def assemble_nonlinear_residual(space: RTSpace, pl: PowerLaw, coeffs, incident=None) -> np.ndarray:
    """``r_i = int f_i . a(u_h + incident)``; batch axes on ``coeffs`` allowed."""
    q = space.quadrature()
    au = a_eval(pl, _state(space, coeffs, incident))
    local = np.einsum("fq,...fqx,fqax->...fa", q.weights, au, q.basis)
    return scatter_vector(space, local)


def assemble_nonlinear_jacobian(space: RTSpace, pl: PowerLaw, coeffs, incident=None,
                                reg_eps: float | None = None) -> np.ndarray:
    """``J_ij = int f_i . Da(u_h + incident) f_j`` as a dense matrix."""
    return weighted_gram(space, a_jacobian(pl, _state(space, coeffs, incident), reg_eps))


def weighted_gram(space: RTSpace, tensor) -> np.ndarray:
    """``G_ij = int f_i . A f_j`` for a matrix field ``A`` given at quadrature points (F, Q, 3, 3)."""
    q = space.quadrature()
    local = np.einsum("fq,fqax,fqxy,fqby->fab", q.weights, q.basis, tensor, q.basis)
    return _scatter_matrix(space, local)
