"""Quadrature rules on triangles and for panel pairs.

Triangle rules are stored in barycentric form with weights that sum to one,
so a physical integral is ``area * sum(w * f(x))``.

Panel-pair rules for touching triangles use the relative-coordinate
transforms of Sauter and Schwab on the reference triangle
``{(x1, x2): 0 <= x2 <= x1 <= 1}`` with vertices (0,0), (1,0), (1,1). The
affine map to a physical triangle (P0, P1, P2) is
``P0 + x1 (P1 - P0) + x2 (P2 - P1)``; shared vertices must come first in
both triangles (P0 for a shared vertex, P0-P1 for a shared edge).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    """Barycentric quadrature rule; ``weights`` sum to one."""

    bary: np.ndarray  # (Q, 3)
    weights: np.ndarray  # (Q,)

    @property
    def size(self) -> int:
        return len(self.weights)


def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _radon7() -> TriangleRule:
    r = np.sqrt(15.0)
    a1, b1 = (6 - r) / 21, (9 + 2 * r) / 21
    a2, b2 = (6 + r) / 21, (9 - 2 * r) / 21
    w1, w2 = (155 - r) / 1200, (155 + r) / 1200
    bary = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a1, a1, b1], [a1, b1, a1], [b1, a1, a1],
        [a2, a2, b2], [a2, b2, a2], [b2, a2, a2],
    ])
    weights = np.array([9 / 40, w1, w1, w1, w2, w2, w2])
    return TriangleRule(bary, weights)


def radon7() -> TriangleRule:
    """Seven-point rule exact for polynomials of total degree 5."""
    return _radon7()


@lru_cache(maxsize=None)
def collapsed_gauss(n: int) -> TriangleRule:
    """``n*n`` point conical product rule (Duffy collapse of a square).

    Exact for total degree ``2n - 2`` at least; used as a brute-force oracle.
    """
    u, wu = gauss_legendre_01(n)
    x1 = np.repeat(u, n)
    x2 = x1 * np.tile(u, n)
    w = np.repeat(wu * u, n) * np.tile(wu, n) * 2.0  # reference area is 1/2
    # reference triangle (0,0),(1,0),(1,1): bary = (1-x1, x1-x2, x2)
    bary = np.stack([1 - x1, x1 - x2, x2], axis=1)
    return TriangleRule(bary, w)


def subdivide_rule(rule: TriangleRule, levels: int = 1) -> TriangleRule:
    """Composite rule on ``4**levels`` congruent subtriangles."""
    for _ in range(levels):
        # the four midpoint subtriangles in barycentric coordinates
        corners = np.array([
            [[1, 0, 0], [.5, .5, 0], [.5, 0, .5]],
            [[.5, .5, 0], [0, 1, 0], [0, .5, .5]],
            [[.5, 0, .5], [0, .5, .5], [0, 0, 1]],
            [[0, .5, .5], [.5, 0, .5], [.5, .5, 0]],
        ])
        bary = np.einsum("qk,skj->sqj", rule.bary, corners).reshape(-1, 3)
        weights = np.tile(rule.weights / 4.0, 4)
        rule = TriangleRule(bary, weights)
    return rule


@dataclass(frozen=True)
class PairRule:
    """Rule for a touching panel pair on the reference triangle.

    ``x`` and ``y`` are (Q, 2) reference coordinates, ``weights`` include
    the transform Jacobian (the integral over reference x reference is
    ``sum(weights * f(x, y))``).
    """

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray


def _cube4(order: int):
    g, w = gauss_legendre_01(order)
    grid = np.meshgrid(g, g, g, g, indexing="ij")
    wgrid = np.meshgrid(w, w, w, w, indexing="ij")
    pts = [a.ravel() for a in grid]
    wt = np.prod([a.ravel() for a in wgrid], axis=0)
    return pts, wt


def _assemble_pair(maps) -> PairRule:
    xs, ys, ws = [], [], []
    for x, y, w in maps:
        xs.append(np.stack(x, axis=1))
        ys.append(np.stack(y, axis=1))
        ws.append(w)
    return PairRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws))


@lru_cache(maxsize=None)
def coincident_rule(order: int = 4) -> PairRule:
    (xi, e1, e2, e3), w = _cube4(order)
    jac = w * xi**3 * e1**2 * e2
    maps = [
        ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1))),
        ((xi * (1 - e1 * e2 * e3), xi * (1 - e1)), (xi, xi * (1 - e1 + e1 * e2))),
        ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2))),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * (1 - e2 + e2 * e3))),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2))),
        ((xi, xi * e1 * (1 - e2)), (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3))),
    ]
    return _assemble_pair([(x, y, jac) for x, y in maps])


@lru_cache(maxsize=None)
def edge_rule(order: int = 4) -> PairRule:
    (xi, e1, e2, e3), w = _cube4(order)
    j1 = w * xi**3 * e1**2
    j = j1 * e2
    maps = [
        ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), j1),
        ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), j),
        ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), j),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), j),
        ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), j),
    ]
    return _assemble_pair(maps)


@lru_cache(maxsize=None)
def vertex_rule(order: int = 4) -> PairRule:
    (xi, e1, e2, e3), w = _cube4(order)
    jac = w * xi**3 * e2
    maps = [
        ((xi, xi * e1), (xi * e2, xi * e2 * e3), jac),
        ((xi * e2, xi * e2 * e3), (xi, xi * e1), jac),
    ]
    return _assemble_pair(maps)


def reference_to_bary(xy: np.ndarray) -> np.ndarray:
    """Reference coordinates (x1, x2) to barycentric weights of (P0, P1, P2)."""
    x1, x2 = xy[..., 0], xy[..., 1]
    return np.stack([1 - x1, x1 - x2, x2], axis=-1)
