"""Lowest-order Raviart-Thomas space on a closed triangulated surface.

One degree of freedom per edge. On a triangle T with corners v_0, v_1, v_2
the local shape function attached to the edge opposite v_k is

    f_k(x) = sign * |e_k| / (2 |T|) * (x - v_k),    div f_k = sign * |e_k| / |T|,

with ``sign = +1`` on the lower-indexed adjacent triangle and ``-1`` on the
other, so the normal flux across e_k is continuous and equals one (flowing
from the first triangle into the second).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .quadrature import TriangleRule, radon7
from .surface_mesh import SurfaceMesh


@dataclass(frozen=True)
class QuadratureData:
    """Basis values at the quadrature points of every triangle."""

    points: np.ndarray  # (F, Q, 3)
    weights: np.ndarray  # (F, Q) physical weights (include area)
    basis: np.ndarray  # (F, Q, 3 local, 3 xyz), signs included
    div: np.ndarray  # (F, 3 local)


@dataclass(frozen=True, eq=False)
class RTSpace:
    mesh: SurfaceMesh
    dofs: np.ndarray  # (F, 3) global DOF of local edge k
    signs: np.ndarray  # (F, 3) +-1
    coef: np.ndarray  # (F, 3) sign * |e_k| / (2 |T|)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_edges

    @property
    def gather(self):
        """Sparse (3F, D) incidence of local slots to global DOFs."""
        if "gather" not in self._cache:
            F = self.mesh.n_triangles
            self._cache["gather"] = sp.csr_matrix(
                (np.ones(3 * F), (np.arange(3 * F), self.dofs.ravel())), shape=(3 * F, self.n_dofs)
            )
        return self._cache["gather"]

    def quadrature(self, rule: TriangleRule | None = None) -> QuadratureData:
        """Basis values on all triangles for ``rule`` (default: 7-point degree 5)."""
        rule = radon7() if rule is None else rule
        key = id(rule)
        if key not in self._cache:
            pts = np.einsum("qk,fkx->fqx", rule.bary, self.mesh.corners)
            self._cache[key] = (rule, QuadratureData(
                points=pts,
                weights=self.mesh.areas[:, None] * rule.weights[None, :],
                basis=self.basis_at(np.arange(self.mesh.n_triangles)[:, None], pts),
                div=2.0 * self.coef,
            ))
        return self._cache[key][1]

    def basis_at(self, tri, x) -> np.ndarray:
        """Signed local shape functions of triangles ``tri`` at points ``x``.

        ``tri`` broadcasts against ``x[..., 0]``; returns shape ``x.shape[:-1] + (3, 3)``.
        """
        tri = np.asarray(tri)
        corners = self.mesh.corners[tri]  # (..., 3, 3)
        return self.coef[tri][..., None] * (x[..., None, :] - corners)


def build_rt_space(mesh: SurfaceMesh) -> RTSpace:
    F = mesh.n_triangles
    dofs = mesh.triangle_edges
    first = mesh.edge_triangles[dofs, 0]
    signs = np.where(first == np.arange(F)[:, None], 1.0, -1.0)
    c = mesh.corners
    lengths = np.linalg.norm(c[:, [2, 0, 1]] - c[:, [1, 2, 0]], axis=2)
    coef = signs * lengths / (2.0 * mesh.areas[:, None])
    return RTSpace(mesh=mesh, dofs=dofs, signs=signs, coef=coef)


def eval_rt0(space: RTSpace, tri: int, bary) -> list[tuple[int, np.ndarray, float]]:
    """Nonzero basis functions on triangle ``tri`` at a barycentric point.

    Returns ``[(dof, value, divergence), ...]`` for the three local edges.
    """
    F = space.mesh.n_triangles
    if not 0 <= tri < F:
        raise IndexError(f"triangle index {tri} out of range [0, {F})")
    bary = np.asarray(bary, float)
    if bary.shape != (3,) or np.any(bary < -1e-12) or abs(bary.sum() - 1) > 1e-12:
        raise ValueError(f"not a barycentric point inside the triangle: {bary}")
    x = bary @ space.mesh.corners[tri]
    vals = space.basis_at(tri, x)
    return [(int(space.dofs[tri, k]), vals[k], float(2 * space.coef[tri, k])) for k in range(3)]


def _scatter_matrix(space: RTSpace, local: np.ndarray) -> np.ndarray:
    """Sum (F, 3, 3) local blocks into a dense (D, D) matrix."""
    D = space.n_dofs
    rows = np.repeat(space.dofs, 3, axis=1).ravel()
    cols = np.tile(space.dofs, (1, 3)).ravel()
    out = np.bincount(rows * D + cols, weights=local.ravel(), minlength=D * D)
    return out.reshape(D, D)


def scatter_vector(space: RTSpace, local) -> np.ndarray:
    """Sum per-triangle local values (..., F, 3) into global vectors (..., D)."""
    local = np.asarray(local)
    flat = local.reshape(-1, local.shape[-2] * 3)
    out = flat @ space.gather
    return out.reshape(local.shape[:-2] + (space.n_dofs,))


def assemble_mass(space: RTSpace, rule: TriangleRule | None = None) -> np.ndarray:
    """Gram matrix ``M_ij = int f_i . f_j``."""
    q = space.quadrature(rule)
    local = np.einsum("fq,fqax,fqbx->fab", q.weights, q.basis, q.basis)
    return _scatter_matrix(space, local)


def assemble_pairing(space: RTSpace, rule: TriangleRule | None = None) -> np.ndarray:
    """Skew pairing ``P_ij = int (f_i x nu) . f_j``."""
    q = space.quadrature(rule)
    nu = space.mesh.normals[:, None, None, :]
    rot = np.cross(q.basis, nu)
    local = np.einsum("fq,fqax,fqbx->fab", q.weights, rot, q.basis)
    P = _scatter_matrix(space, local)
    return 0.5 * (P - P.T)  # removes rounding asymmetry only


def eval_coefficients(space: RTSpace, coeffs, rule: TriangleRule | None = None) -> np.ndarray:
    """Values of ``sum_i c_i f_i`` at quadrature points.

    ``coeffs`` may carry leading batch axes: (..., D) -> (..., F, Q, 3).
    """
    q = space.quadrature(rule)
    c = np.asarray(coeffs)[..., space.dofs]  # (..., F, 3)
    return np.einsum("...fa,fqax->...fqx", c, q.basis)


def l2_project(space: RTSpace, values, rule: TriangleRule | None = None) -> np.ndarray:
    """L2 projection of tangential values given at quadrature points (..., F, Q, 3)."""
    q = space.quadrature(rule)
    local = np.einsum("fq,...fqx,fqax->...fa", q.weights, values, q.basis)
    rhs = scatter_vector(space, local)
    M = assemble_mass(space, rule)
    try:
        cho = sla.cho_factor(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular mass matrix; the mesh is probably broken") from exc
    flat = rhs.reshape(-1, space.n_dofs)
    return sla.cho_solve(cho, flat.T).T.reshape(rhs.shape)


def project_trace(space: RTSpace, field_fn, rule: TriangleRule | None = None) -> np.ndarray:
    """RT0 coefficients of the L2 projection of ``field x nu``.

    ``field_fn`` maps points (..., 3) to vectors (..., 3).
    """
    q = space.quadrature(rule)
    vals = np.asarray(field_fn(q.points))
    trace = np.cross(vals, space.mesh.normals[:, None, :])
    return l2_project(space, trace, rule)


def lp_norm(space: RTSpace, coeffs, p: float, rule: TriangleRule | None = None):
    """``(int |u_h|^p)^(1/p)`` by triangle quadrature; batch axes allowed."""
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    q = space.quadrature(rule)
    u = eval_coefficients(space, coeffs, rule)
    mag = np.linalg.norm(u, axis=-1)
    return np.einsum("fq,...fq->...", q.weights, mag**p) ** (1.0 / p)


def interpolate_trace(space: RTSpace, field_fn, n_gauss: int = 4) -> np.ndarray:
    """Canonical RT0 interpolant of ``field x nu`` (edge fluxes).

    The coefficient of edge e is the mean of ``(F x nu_T) . m_T`` along e on
    its first triangle T, with ``m_T`` the in-plane unit normal of e pointing out of T.
    Unlike the L2 projection, this commutes with the surface divergence.
    """
    mesh = space.mesh
    T = mesh.edge_triangles[:, 0]
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    nu = mesh.normals[T]
    m = np.cross(t, nu) / length[:, None]
    # orient m away from the opposite vertex of T
    k = np.argmax(mesh.triangle_edges[T] == np.arange(mesh.n_edges)[:, None], axis=1)
    opp = mesh.vertices[mesh.triangles[T, k]]
    flip = np.einsum("ij,ij->i", m, a - opp) < 0
    m[flip] *= -1
    g, w = np.polynomial.legendre.leggauss(n_gauss)
    g, w = (g + 1) / 2, w / 2
    pts = a[:, None, :] + g[None, :, None] * t[:, None, :]
    F = np.asarray(field_fn(pts))
    trace = np.cross(F, nu[:, None, :])
    return np.einsum("q,eqx,ex->e", w, trace, m)
