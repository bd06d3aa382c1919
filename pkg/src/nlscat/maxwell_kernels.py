"""Galerkin boundary operators and layer potentials of time-harmonic Maxwell.

With ``G(s, r) = exp(-s r) / (4 pi r)`` and RT0 basis functions ``f_i`` the
assembled forms are

    V_ij = -s  int int G f_i(x) . f_j(y) - 1/s int int G div f_i(x) div f_j(y)
    K_ij =      int int f_i(x) . (grad_x G(x - y) x f_j(y))

and the impedance Calderon block is ``[[-V, K - P/2], [-K - P/2, -V]]``
where ``P`` is the skew pairing matrix. Both V and K are symmetric.

Panel pairs are split into coincident, edge-adjacent, vertex-adjacent
(relative-coordinate singular quadrature), near (centroid distance below
the larger diameter, regular rule on 4+4 subtriangles) and far (regular
rule). Regular pairs are contracted separably from per-triangle basis data;
local 3x3 blocks are summed onto edge DOFs for all frequencies at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import quadrature as quad
from .rt_space import RTSpace, assemble_pairing

FOUR_PI = 4.0 * np.pi


def greens(s, r):
    """Fundamental solution ``exp(-s r) / (4 pi r)``."""
    r = np.asarray(r, float)
    if np.any(r <= 0):
        raise ValueError("greens requires r > 0")
    return np.exp(-np.asarray(s) * r) / (FOUR_PI * r)


def _check_frequencies(s_values) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s_values, dtype=complex))
    if np.any(s.real <= 0):
        raise ValueError(f"frequencies need Re s > 0, got min Re s = {s.real.min():.3g}")
    return s


@dataclass(frozen=True)
class AssemblyOptions:
    singular_order: int = 4
    far_rule: str = "radon7"  # or "collapsed4" etc
    near_levels: int = 1
    exploit_symmetry: bool = True
    chunk_points: int = 400_000  # points per chunk and frequency

    def far(self) -> quad.TriangleRule:
        if self.far_rule == "radon7":
            return quad.radon7()
        if self.far_rule.startswith("collapsed"):
            return quad.collapsed_gauss(int(self.far_rule[len("collapsed"):]))
        raise ValueError(f"unknown far-field rule {self.far_rule!r}")


@dataclass(frozen=True)
class PairLists:
    coincident: np.ndarray  # (n,) triangle ids
    edge: np.ndarray  # (n, 2) ordered pairs (i, j)
    vertex: np.ndarray
    near: np.ndarray
    touching_or_near: sp.csr_matrix  # boolean F x F mask of non-far pairs


def classify_pairs(space: RTSpace, symmetric: bool = True) -> PairLists:
    """Sort panel pairs by proximity class; ``symmetric`` keeps only i <= j."""
    mesh = space.mesh
    F = mesh.n_triangles
    inc = sp.csr_matrix(
        (np.ones(3 * F), (np.repeat(np.arange(F), 3), mesh.triangles.ravel())),
        shape=(F, mesh.n_vertices),
    )
    shared = (inc @ inc.T).tocoo()
    i, j, cnt = shared.row, shared.col, shared.data.astype(int)
    keep = i < j if symmetric else i != j
    edge = np.stack([i[keep & (cnt == 2)], j[keep & (cnt == 2)]], axis=1)
    vertex = np.stack([i[keep & (cnt == 1)], j[keep & (cnt == 1)]], axis=1)

    cent = mesh.centroids
    diam = mesh.diameters
    tree = cKDTree(cent)
    cand = tree.query_pairs(r=float(diam.max()), output_type="ndarray")
    if len(cand):
        a, b = cand[:, 0], cand[:, 1]
        dist = np.linalg.norm(cent[a] - cent[b], axis=1)
        close = dist < np.maximum(diam[a], diam[b])
        a, b = a[close], b[close]
        touching = np.asarray(inc[a].multiply(inc[b]).sum(axis=1)).ravel() > 0
        a, b = a[~touching], b[~touching]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        near = np.stack([lo, hi], axis=1)
        if not symmetric:
            near = np.concatenate([near, near[:, ::-1]])
    else:
        near = np.zeros((0, 2), dtype=np.int64)

    rows = np.concatenate([np.arange(F), i, near[:, 0], near[:, 1]])
    cols = np.concatenate([np.arange(F), j, near[:, 1], near[:, 0]])
    mask = sp.csr_matrix((np.ones(len(rows), bool), (rows, cols)), shape=(F, F))
    return PairLists(np.arange(F), edge, vertex, near, mask)


# ---------------------------------------------------------------- pair geometry


@dataclass
class _PairBatch:
    """Touching pairs with matched (non-product) quadrature points."""

    tx: np.ndarray  # (P,)
    ty: np.ndarray
    r: np.ndarray  # (P, n)
    w: np.ndarray  # (P, n)
    C1: np.ndarray  # (P, n, 9) w f_a(x) . f_b(y)
    D1: np.ndarray  # (P, n, 9) w (x - y) . (f_b(y) x f_a(x))
    DD: np.ndarray  # (P, 9) div f_a div f_b


def _make_batch(space: RTSpace, tx, ty, x, y, w) -> _PairBatch:
    fx = space.basis_at(tx[:, None], x)  # (P, n, 3a, 3)
    fy = space.basis_at(ty[:, None], y)  # (P, n, 3b, 3)
    diff = x - y
    r = np.sqrt(np.einsum("pnx,pnx->pn", diff, diff))
    P, n = r.shape
    fxw = fx * w[:, :, None, None]
    C1 = (fxw @ fy.swapaxes(-1, -2)).reshape(P, n, 9)
    # (x - y) . (f_b x f_a) = f_a . ((x - y) x f_b)
    dxg = _cross(diff[:, :, None, :], fy)
    D1 = (fxw @ dxg.swapaxes(-1, -2)).reshape(P, n, 9)
    div = 2.0 * space.coef
    DD = (div[tx][:, :, None] * div[ty][:, None, :]).reshape(P, 9)
    return _PairBatch(tx, ty, r, w, C1, D1, DD)


def _cross(a, b):
    """Cross product on the last axis with broadcasting (faster than np.cross)."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _contract(batch: _PairBatch, s: np.ndarray):
    """Local 3x3 blocks of V and K for every pair and frequency: (S, P, 9) each."""
    r = batch.r
    E = np.exp(-s[:, None, None] * r[None])  # (S, P, n)
    G = E / (FOUR_PI * r)
    Gt = G.transpose(1, 0, 2)  # (P, S, n)
    V1 = Gt @ batch.C1  # (P, S, 9)
    V0 = (Gt @ batch.w[:, :, None])[:, :, 0]
    V = -s[None, :, None] * V1 - (1.0 / s)[None, :, None] * V0[:, :, None] * batch.DD[:, None, :]
    kappa = -G * (1.0 + s[:, None, None] * r[None]) / (r * r)[None]
    K = kappa.transpose(1, 0, 2) @ batch.D1
    return V.transpose(1, 0, 2), K.transpose(1, 0, 2)


@dataclass(frozen=True)
class _RuleData:
    """Per-triangle data of a product rule for separable pair contractions.

    Left factors have layout (F, 3a, Q*3) and right factors (F, Q, 3*3b) so
    that both contractions are plain batched matmuls.
    """

    X: np.ndarray  # (F, Q, 3)
    w: np.ndarray  # (F, Q, 1)
    f_left: np.ndarray  # w f_a
    u_left: np.ndarray  # w f_a x x
    f_right: np.ndarray  # w f_b
    w_right: np.ndarray  # w y x f_b


def _rule_data(space: RTSpace, rule: quad.TriangleRule) -> _RuleData:
    q = space.quadrature(rule)
    F, Q = q.weights.shape
    fw = q.weights[:, :, None, None] * q.basis  # (F, Q, a, x)
    uw = _cross(fw, q.points[:, :, None, :])
    ww = _cross(q.points[:, :, None, :], fw)

    def left(t):
        return np.ascontiguousarray(t.transpose(0, 2, 1, 3).reshape(F, 3, 3 * Q))

    def right(t):
        return np.ascontiguousarray(t.transpose(0, 1, 3, 2).reshape(F, Q, 9)).astype(complex)

    return _RuleData(q.points, q.weights[:, :, None].astype(complex), left(fw), left(uw), right(fw), right(ww))


def _contract_product(data: _RuleData, div: np.ndarray, tx, ty, s: np.ndarray):
    """Local blocks for pairs integrated with a tensor-product rule: (S, P, 9) each.

    Uses (x - y) . (g x f) = g . (f x x) - f . (y x g) so that every term
    separates into x-only and y-only factors.
    """
    Xx, Xy = data.X[tx], data.X[ty]  # (P, Q, 3)
    d = Xx[:, :, None, :] - Xy[:, None, :, :]
    r = np.sqrt(np.einsum("pijx,pijx->pij", d, d))  # (P, Q, Q)
    P, Q = r.shape[:2]
    S = len(s)
    sr = s[None, :, None, None] * r[:, None]
    G = np.exp(-sr) / (FOUR_PI * r[:, None])  # (P, S, Q, Q)
    kappa = -G * (1.0 + sr) / (r * r)[:, None]
    G = G.reshape(P, S * Q, Q)
    kappa = kappa.reshape(P, S * Q, Q)

    def sandwich(kern, left, right):
        # sum_ij left[p,a,(i,x)] kern[p,s,i,j] right[p,j,(x,b)] -> (P, S, 3a, 3b)
        t = (kern @ right).reshape(P, S, 3 * Q, 3)
        return left[:, None] @ t

    fl, fr = data.f_left[tx], data.f_right[ty]
    V1 = sandwich(G, fl, fr)
    V0 = ((G @ data.w[ty]).reshape(P, S, Q) * data.w[tx][:, None, :, 0]).sum(axis=2)
    DD = div[tx][:, :, None] * div[ty][:, None, :]  # (P, 3, 3)
    V = -s[None, :, None, None] * V1 - (1.0 / s)[None, :, None, None] * V0[:, :, None, None] * DD[:, None]
    K = sandwich(kappa, data.u_left[tx], fr) - sandwich(kappa, fl, data.w_right[ty])
    return V.reshape(P, S, 9).transpose(1, 0, 2), K.reshape(P, S, 9).transpose(1, 0, 2)


def _product_points(space: RTSpace, rule: quad.TriangleRule, tx, ty):
    """Tensor-product points of two triangle rules for pairs (tx, ty)."""
    q = space.quadrature(rule)
    nq = rule.size
    x = np.repeat(q.points[tx], nq, axis=1)  # (P, nq*nq, 3), x index slow
    y = np.tile(q.points[ty], (1, nq, 1))
    w = (q.weights[tx][:, :, None] * q.weights[ty][:, None, :]).reshape(len(tx), -1)
    return x, y, w


def _order_shared_first(tri_a, tri_b):
    """Reorder two vertex triples so that shared vertices come first, in the same order."""
    P = len(tri_a)
    ox = np.empty((P, 3), dtype=np.int64)
    oy = np.empty((P, 3), dtype=np.int64)
    # shared[p, i, j] = tri_a[p, i] == tri_b[p, j]
    shared = tri_a[:, :, None] == tri_b[:, None, :]
    in_b = shared.any(axis=2)
    in_a = shared.any(axis=1)
    for p in range(P):
        ia = np.flatnonzero(in_a[p] == 0)
        common = tri_a[p][in_b[p]]
        ox[p] = np.concatenate([common, tri_a[p][~in_b[p]]])
        oy[p] = np.concatenate([common, tri_b[p][ia]])
    return ox, oy


def _singular_points(space: RTSpace, rule: quad.PairRule, tx, ty, kind: str):
    """Physical points of a relative-coordinate rule for touching pairs."""
    mesh = space.mesh
    tri = mesh.triangles
    if kind == "coincident":
        ox, oy = tri[tx], tri[ty]
    else:
        ox, oy = _order_shared_first(tri[tx], tri[ty])
    bx = quad.reference_to_bary(rule.x)  # (n, 3)
    by = quad.reference_to_bary(rule.y)
    x = np.einsum("nk,pkx->pnx", bx, mesh.vertices[ox])
    y = np.einsum("nk,pkx->pnx", by, mesh.vertices[oy])
    # affine Jacobians: the reference triangle has area 1/2
    w = rule.weights[None, :] * (4.0 * mesh.areas[tx] * mesh.areas[ty])[:, None]
    return x, y, w


class _Assembler:
    """Streams panel-pair batches for one space and accumulates onto edge DOFs."""

    def __init__(self, space: RTSpace, options: AssemblyOptions):
        self.space = space
        self.opt = options
        self.pairs = classify_pairs(space, symmetric=options.exploit_symmetry)
        self.far_rule = options.far()
        self.near_rule = quad.subdivide_rule(self.far_rule, options.near_levels)
        mask = self.pairs.touching_or_near.toarray()
        far = np.triu(~mask, 1) if options.exploit_symmetry else ~mask
        self.far_i, self.far_j = np.nonzero(far)
        self.div = 2.0 * space.coef

    def _scatter(self, out, tx, ty, loc):
        """Add local blocks (S, P, 9) of pairs (tx, ty) to out (S, D*D)."""
        D = self.space.n_dofs
        rg = self.space.dofs[tx]  # (P, 3)
        cg = self.space.dofs[ty]
        idx = (rg[:, :, None] * D + cg[:, None, :]).reshape(-1)
        vals = loc.reshape(loc.shape[0], -1)
        if self.opt.exploit_symmetry:
            off = tx != ty
            idx_t = (cg[off][:, None, :] * D + rg[off][:, :, None]).reshape(-1)
            idx = np.concatenate([idx, idx_t])
            vals = np.concatenate([vals, loc[:, off].reshape(loc.shape[0], -1)], axis=1)
        uniq, inv = np.unique(idx, return_inverse=True)
        R = sp.csr_matrix((np.ones(len(idx)), (inv, np.arange(len(idx)))), shape=(len(uniq), len(idx)))
        out[:, uniq] += (R @ vals.T).T

    def assemble(self, s_values, want=("V", "K")):
        s = _check_frequencies(s_values)
        S, D = len(s), self.space.n_dofs
        outV = np.zeros((S, D * D), complex)
        outK = np.zeros((S, D * D), complex)
        o = self.opt
        budget = max(o.chunk_points // S, 1)

        def chunks(n_items, pts_per_item):
            step = max(budget // pts_per_item, 1)
            for a in range(0, n_items, step):
                yield slice(a, min(a + step, n_items))

        for kind, rule, arr in (
            ("coincident", quad.coincident_rule(o.singular_order), None),
            ("edge", quad.edge_rule(o.singular_order), self.pairs.edge),
            ("vertex", quad.vertex_rule(o.singular_order), self.pairs.vertex),
        ):
            if kind == "coincident":
                tx = ty = self.pairs.coincident
            else:
                tx, ty = arr[:, 0], arr[:, 1]
            for sl in chunks(len(tx), len(rule.weights)):
                x, y, w = _singular_points(self.space, rule, tx[sl], ty[sl], kind)
                Vloc, Kloc = _contract(_make_batch(self.space, tx[sl], ty[sl], x, y, w), s)
                self._scatter(outV, tx[sl], ty[sl], Vloc)
                self._scatter(outK, tx[sl], ty[sl], Kloc)

        for rule, (ti, tj) in (
            (self.near_rule, (self.pairs.near[:, 0], self.pairs.near[:, 1])),
            (self.far_rule, (self.far_i, self.far_j)),
        ):
            data = _rule_data(self.space, rule)
            for sl in chunks(len(ti), rule.size**2):
                Vloc, Kloc = _contract_product(data, self.div, ti[sl], tj[sl], s)
                self._scatter(outV, ti[sl], tj[sl], Vloc)
                self._scatter(outK, ti[sl], tj[sl], Kloc)
        result = {}
        if "V" in want:
            result["V"] = outV.reshape(S, D, D)
        if "K" in want:
            result["K"] = outK.reshape(S, D, D)
        return result


def assemble_layer_operators(space: RTSpace, s_values, options: AssemblyOptions | None = None):
    """V(s) and K(s) for all frequencies: two arrays of shape (S, D, D)."""
    options = options or AssemblyOptions()
    out = _Assembler(space, options).assemble(s_values)
    return out["V"], out["K"]


def assemble_single_layer(space: RTSpace, s, options: AssemblyOptions | None = None) -> np.ndarray:
    options = options or AssemblyOptions()
    return _Assembler(space, options).assemble([s], want=("V",))["V"][0]


def assemble_double_layer(space: RTSpace, s, options: AssemblyOptions | None = None) -> np.ndarray:
    options = options or AssemblyOptions()
    return _Assembler(space, options).assemble([s], want=("K",))["K"][0]


def panel_pair_matrices(space: RTSpace, tx: int, ty: int, s: complex,
                        rule: quad.TriangleRule | None = None):
    """Local 3x3 blocks of V and K for one non-touching pair under a product rule."""
    rule = rule or quad.radon7()
    x, y, w = _product_points(space, rule, np.array([tx]), np.array([ty]))
    V, K = _contract(_make_batch(space, np.array([tx]), np.array([ty]), x, y, w), np.array([s], complex))
    return V[0, 0].reshape(3, 3), K[0, 0].reshape(3, 3)


@dataclass(frozen=True, eq=False)
class CalderonAssembly:
    s: complex
    V: np.ndarray
    K: np.ndarray
    P: np.ndarray

    @property
    def C(self) -> np.ndarray:
        """Galerkin matrix of ``[[-V, K], [-K, -V]]`` tested with the skew pairing."""
        return np.block([[-self.V, self.K], [-self.K, -self.V]])

    @property
    def Cimp(self) -> np.ndarray:
        half = 0.5 * self.P
        return np.block([[-self.V, self.K - half], [-self.K - half, -self.V]])


def assemble_calderon(space: RTSpace, s, shift: float = 0.0,
                      options: AssemblyOptions | None = None) -> CalderonAssembly:
    if shift < 0:
        raise ValueError("shift must be non-negative")
    sv = complex(s) + shift
    V, K = assemble_layer_operators(space, [sv], options)
    return CalderonAssembly(sv, V[0], K[0], assemble_pairing(space))


# ---------------------------------------------------------------- potentials


class NearSurfaceError(ValueError):
    """Evaluation point too close to the boundary for the potential quadrature."""


def potential_matrices(space: RTSpace, s_values, points, min_distance_factor: float = 0.25,
                       max_levels: int = 6):
    """Point-evaluation matrices of the single and double layer potentials.

    Returns ``(Smat, Dmat)`` of shape (S, npts, 3, D) with

        Smat phi = -s int G phi + 1/s int grad_x G div phi,
        Dmat psi =  int grad_x G x psi.

    Panels closer than twice their diameter are integrated on a uniformly
    refined copy whose sub-panel diameter is at most half the distance.
    Points closer than ``min_distance_factor`` times the local panel
    diameter are refused.
    """
    s = _check_frequencies(s_values)
    pts = np.atleast_2d(np.asarray(points, float))
    mesh = space.mesh
    base = quad.radon7()
    diam = mesh.diameters
    cent = mesh.centroids
    S, D = len(s), space.n_dofs
    Smat = np.zeros((S, len(pts), 3, D), complex)
    Dmat = np.zeros((S, len(pts), 3, D), complex)
    G = space.gather
    for ip, x in enumerate(pts):
        # distance to each panel, bounded below by centroid distance minus radius
        dist = point_triangle_distance(x, mesh.corners)
        k = int(np.argmin(dist))
        if dist[k] < min_distance_factor * diam[k]:
            raise NearSurfaceError(
                f"point {x} lies {dist[k]:.3g} from the surface, below {min_distance_factor} "
                f"panel diameters ({diam[k]:.3g})"
            )
        levels = np.zeros(len(diam), dtype=int)
        close = dist < 2.0 * diam
        with np.errstate(divide="ignore"):
            need = np.ceil(np.log2(np.maximum(2.0 * diam[close] / dist[close], 1.0)))
        levels[close] = np.minimum(need.astype(int), max_levels)
        loc_S = np.zeros((S, len(diam), 3, 3), complex)  # (S, F, xyz, a)
        loc_D = np.zeros((S, len(diam), 3, 3), complex)
        for lev in np.unique(levels):
            tris = np.flatnonzero(levels == lev)
            rule = quad.subdivide_rule(base, int(lev)) if lev else base
            y = np.einsum("qk,fkx->fqx", rule.bary, mesh.corners[tris])
            w = mesh.areas[tris, None] * rule.weights[None, :]
            f = space.basis_at(tris[:, None], y)  # (f, q, a, 3)
            div = 2.0 * space.coef[tris]  # (f, a)
            diff = x - y
            r = np.linalg.norm(diff, axis=-1)
            E = np.exp(-s[:, None, None] * r[None])
            Gv = E / (FOUR_PI * r)  # (S, f, q)
            kap = -Gv * (1.0 + s[:, None, None] * r) / (r * r)
            # -s sum w G f_a + 1/s sum w kappa (x - y) div_a
            t1 = np.einsum("sfq,fq,fqax->sfxa", Gv, w, f)
            t2 = np.einsum("sfq,fq,fqx,fa->sfxa", kap, w, diff, div)
            loc_S[:, tris] = -s[:, None, None, None] * t1 + (1.0 / s)[:, None, None, None] * t2
            # kappa (x - y) x f_a
            loc_D[:, tris] = np.einsum("sfq,fq,fqax->sfxa", kap, w, np.cross(diff[:, :, None, :], f))
        Smat[:, ip] = (loc_S.transpose(0, 2, 1, 3).reshape(S * 3, -1) @ G).reshape(S, 3, D)
        Dmat[:, ip] = (loc_D.transpose(0, 2, 1, 3).reshape(S * 3, -1) @ G).reshape(S, 3, D)
    return Smat, Dmat


def eval_potentials(space: RTSpace, s, phi, psi, points, **kwargs):
    """Fields ``E = -S phi + D psi`` and ``H = -D phi - S psi`` at exterior points.

    Returns arrays of shape (npts, 3).
    """
    Smat, Dmat = potential_matrices(space, [s], points, **kwargs)
    Sm, Dm = Smat[0], Dmat[0]
    phi = np.asarray(phi)
    psi = np.asarray(psi)
    E = -Sm @ phi + Dm @ psi
    H = -Dm @ phi - Sm @ psi
    return E, H


def point_triangle_distance(x, corners) -> np.ndarray:
    """Euclidean distance from point ``x`` to each triangle (F, 3, 3)."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, ac, ap = b - a, c - a, x - a
    # project onto the plane and clamp by the standard region test
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = x - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = x - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        closest = a + v[:, None] * ab + w[:, None] * ac
        # edge and vertex regions
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
    cond = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (d6 >= 0) & (d5 <= d6),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choice = [
        a, b, c,
        a + t_ab[:, None] * ab,
        a + t_ac[:, None] * ac,
        b + t_bc[:, None] * (c - b),
    ]
    for cnd, pt in zip(reversed(cond), reversed(choice)):
        closest = np.where(cnd[:, None], pt, closest)
    return np.linalg.norm(x - closest, axis=1)


# ---------------------------------------------------------------- dipole oracle


def dipole_fields(s, source, moment, points):
    """Exact time-harmonic fields of a point dipole (used as a test oracle).

    ``H = grad G x p`` and ``E = (Hess G p - s^2 G p) / s`` with ``G = G(s, |x - x0|)``;
    the pair solves ``s E - curl H = 0`` and ``s H + curl E = 0`` away from ``x0``.
    """
    s = complex(s)
    d = np.asarray(points, float) - np.asarray(source, float)
    p = np.asarray(moment, complex)
    r = np.linalg.norm(d, axis=-1)
    rh = d / r[..., None]
    e = np.exp(-s * r) / FOUR_PI
    g = e / r
    g1 = -e * (1 + s * r) / r**2  # dG/dr
    g2 = e * (s * s * r * r + 2 * s * r + 2) / r**3  # d2G/dr2
    H = np.cross(g1[..., None] * rh, p)
    rp = np.einsum("...x,x->...", rh, p)
    hess_p = g2[..., None] * rp[..., None] * rh + (g1 / r)[..., None] * (p - rp[..., None] * rh)
    E = (hess_p - s * s * g[..., None] * p) / s
    return E, H
