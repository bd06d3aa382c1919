"""Write an unstructured two-cube surface mesh in Gmsh ASCII v2 format.

Each cube face is a Delaunay triangulation of its boundary nodes (``k``
segments per cube edge, shared with the neighbouring faces) and a fixed set
of jittered interior nodes. With ``k = 6`` and 34 interior nodes per face
this gives 90 triangles per face, 540 per cube and 1620 edges for the pair,
a mesh width near ``2**-2.5``.

    python scripts/make_gmsh_fixture.py tests/data/two_cubes_h2-5.msh
"""
from __future__ import annotations

import argparse

import numpy as np
from scipy.spatial import Delaunay

from nlscat.surface_mesh import SurfaceMesh, write_gmsh


def face_points(k: int, n_interior: int, rng) -> np.ndarray:
    """Boundary nodes of the unit square plus jittered interior nodes, in (u, v)."""
    t = np.linspace(0.0, 1.0, k + 1)[:-1]
    edges = [np.stack([t, 0 * t], 1), np.stack([1 + 0 * t, t], 1),
             np.stack([1 - t, 1 + 0 * t], 1), np.stack([0 * t, 1 - t], 1)]
    boundary = np.concatenate(edges)
    # jittered lattice, thinned deterministically to the requested count
    g = int(np.ceil(np.sqrt(n_interior)))
    u, v = np.meshgrid((np.arange(g) + 0.5) / g, (np.arange(g) + 0.5) / g, indexing="ij")
    lattice = np.stack([u.ravel(), v.ravel()], 1)
    lattice = lattice[rng.permutation(len(lattice))[:n_interior]]
    margin = 0.35 / k
    interior = np.clip(lattice + rng.uniform(-0.15, 0.15, lattice.shape) / g, margin, 1 - margin)
    return np.concatenate([boundary, interior])


def cube_surface(center, k: int, n_interior: int, rng):
    verts, tris = [], []
    for axis in range(3):
        u_ax, v_ax = (axis + 1) % 3, (axis + 2) % 3
        for level in (0.0, 1.0):
            uv = face_points(k, n_interior, rng)
            tri = Delaunay(uv).simplices
            if len(np.unique(tri)) != len(uv):
                raise RuntimeError("Delaunay dropped a node")
            p = np.empty((len(uv), 3))
            p[:, axis] = level
            p[:, u_ax], p[:, v_ax] = uv[:, 0], uv[:, 1]
            # orient outward: e_u x e_v = e_axis, so flip on the lower face
            a, b, c = uv[tri[:, 0]], uv[tri[:, 1]], uv[tri[:, 2]]
            ccw = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]) > 0
            want_ccw = level == 1.0
            tri = np.where((ccw == want_ccw)[:, None], tri, tri[:, [0, 2, 1]])
            tris.append(tri + sum(len(x) for x in verts))
            verts.append(p)
    verts = np.concatenate(verts) - 0.5 + np.asarray(center, float)
    tris = np.concatenate(tris)
    # merge nodes shared by neighbouring faces
    key = np.round(verts * 1e9).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return verts[first], inverse.ravel()[tris]


def two_cube_mesh(k: int = 6, n_interior: int = 34, gap: float = 0.5, seed: int = 0) -> SurfaceMesh:
    rng = np.random.default_rng(seed)
    offset = (1.0 + gap) / 2
    parts = [cube_surface((offset, 0, 0), k, n_interior, rng), cube_surface((-offset, 0, 0), k, n_interior, rng)]
    verts = np.concatenate([parts[0][0], parts[1][0]])
    tris = np.concatenate([parts[0][1], parts[1][1] + len(parts[0][0])])
    return SurfaceMesh.from_arrays(verts, tris)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("path")
    ap.add_argument("--k", type=int, default=6)
    ap.add_argument("--interior", type=int, default=34)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    mesh = two_cube_mesh(args.k, args.interior, seed=args.seed)
    write_gmsh(mesh, args.path)
    print(f"{args.path}: {mesh.n_vertices} nodes, {mesh.n_triangles} triangles, {mesh.n_edges} edges")


if __name__ == "__main__":
    main()
