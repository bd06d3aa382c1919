"""Closed triangulated surfaces: construction, I/O and validation.

Conventions
-----------
* Triangles are oriented counterclockwise when seen from outside, so the
  right-hand normal ``(v1 - v0) x (v2 - v0)`` points outward.
* Edges are stored as ``(low, high)`` vertex-index pairs; this is the global
  edge orientation used by the RT0 sign convention.
* ``triangle_edges[t, k]`` is the edge opposite local vertex ``k``.
* ``edge_triangles[e]`` lists the two adjacent triangles, lower index first.

File formats
------------
OFF: the usual ``OFF`` header, a counts line ``nv nf ne``, ``nv`` vertex lines
and ``nf`` face lines ``3 i j k``. Only triangular faces are accepted.

Gmsh: ASCII format version 2 (``$MeshFormat`` with ``2.x 0 8``). Only
element type 2 (3-node triangle) is accepted; any other element type, a
binary file or a different format version raises :class:`MeshFormatError`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)


class MeshError(ValueError):
    """Invalid surface mesh."""


class MeshFormatError(MeshError):
    """Unreadable or unsupported mesh file."""


class NonManifoldError(MeshError):
    pass


class OrientationError(MeshError):
    pass


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray  # (V, 3) float
    triangles: np.ndarray  # (F, 3) int
    edges: np.ndarray  # (E, 2) int, low < high
    edge_triangles: np.ndarray  # (E, 2) int, lower triangle first
    triangle_edges: np.ndarray  # (F, 3) edge opposite local vertex k
    normals: np.ndarray  # (F, 3) unit outward normals
    areas: np.ndarray  # (F,)
    component: np.ndarray  # (F,) connected component id per triangle

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_components(self) -> int:
        return int(self.component.max()) + 1 if len(self.component) else 0

    @property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.triangles]

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def diameters(self) -> np.ndarray:
        """Longest edge of each triangle."""
        c = self.corners
        lengths = np.linalg.norm(c[:, [1, 2, 0]] - c[:, [2, 0, 1]], axis=2)
        return lengths.max(axis=1)

    def signed_volumes(self) -> np.ndarray:
        """Enclosed volume of each connected component (positive if outward)."""
        c = self.corners
        tet = np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])) / 6.0
        return np.bincount(self.component, weights=tet, minlength=self.n_components)

    @classmethod
    def from_arrays(cls, vertices, triangles, validate: bool = True) -> "SurfaceMesh":
        """Build connectivity and geometry from raw vertex/triangle arrays.

        Raises
        ------
        MeshError
            Out-of-range indices, degenerate triangles, non-manifold edges,
            inconsistent or inward orientation (when ``validate``).
        """
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (V, 3), got {vertices.shape}")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise MeshError(f"triangles must have shape (F, 3), got {triangles.shape}")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshError("triangle vertex index out of range")
        if np.any(triangles[:, 0] == triangles[:, 1]) or np.any(
            triangles[:, 1] == triangles[:, 2]
        ) or np.any(triangles[:, 0] == triangles[:, 2]):
            raise MeshError("triangle with repeated vertex")

        c = vertices[triangles]
        cr = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        twice_area = np.linalg.norm(cr, axis=1)
        if np.any(twice_area <= 1e-14 * np.max(twice_area)):
            raise MeshError("degenerate triangle with zero area")
        normals = cr / twice_area[:, None]

        F = len(triangles)
        # local edge k is opposite vertex k: (v1,v2), (v2,v0), (v0,v1)
        a = triangles[:, [1, 2, 0]]
        b = triangles[:, [2, 0, 1]]
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        key = lo * len(vertices) + hi
        uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        edges = np.stack([uniq // len(vertices), uniq % len(vertices)], axis=1)
        triangle_edges = inverse.reshape(F, 3)

        if np.any(counts != 2):
            bad = edges[counts != 2][0]
            raise NonManifoldError(
                f"edge {tuple(bad)} has {counts[counts != 2][0]} adjacent triangles "
                "(closed manifold surfaces need exactly 2)"
            )
        order = np.argsort(inverse, kind="stable")
        tri_of_slot = np.repeat(np.arange(F), 3)[order].reshape(-1, 2)
        edge_triangles = np.sort(tri_of_slot, axis=1)

        # orientation: the two uses of every edge must run in opposite directions
        forward = (a < b).ravel()[order].reshape(-1, 2)
        if np.any(forward[:, 0] == forward[:, 1]):
            bad = int(np.flatnonzero(forward[:, 0] == forward[:, 1])[0])
            raise OrientationError(
                f"inconsistent orientation across edge {tuple(edges[bad])} "
                f"(triangles {tuple(edge_triangles[bad])})"
            )

        adj = sp.coo_matrix(
            (np.ones(len(edges)), (edge_triangles[:, 0], edge_triangles[:, 1])), shape=(F, F)
        )
        _, component = connected_components(adj, directed=False)

        mesh = cls(
            vertices=vertices,
            triangles=triangles,
            edges=edges,
            edge_triangles=edge_triangles,
            triangle_edges=triangle_edges,
            normals=normals,
            areas=0.5 * twice_area,
            component=component.astype(np.int64),
        )
        if validate:
            mesh.validate()
        return mesh

    def validate(self) -> None:
        """Check the closed-surface invariants; raise :class:`MeshError` if violated."""
        vols = self.signed_volumes()
        for k, v in enumerate(vols):
            if v <= 0:
                raise OrientationError(
                    f"component {k} has non-positive signed volume {v:.6g}: normals point inward"
                )
        if np.any(self.areas <= 0):
            raise MeshError("non-positive triangle area")
        chi = euler_characteristics(self)
        if np.any(chi != 2):
            logger.warning("components with Euler characteristic != 2: %s", chi.tolist())

    def translated(self, offset) -> "SurfaceMesh":
        return SurfaceMesh.from_arrays(self.vertices + np.asarray(offset, float), self.triangles)


def euler_characteristics(mesh: SurfaceMesh) -> np.ndarray:
    """``V - E + F`` for each connected component."""
    k = mesh.n_components
    vcomp = np.full(mesh.n_vertices, -1)
    vcomp[mesh.triangles.ravel()] = np.repeat(mesh.component, 3)
    nv = np.bincount(vcomp[vcomp >= 0], minlength=k)
    ne = np.bincount(mesh.component[mesh.edge_triangles[:, 0]], minlength=k)
    nf = np.bincount(mesh.component, minlength=k)
    return nv - ne + nf


def merge_meshes(*meshes: SurfaceMesh) -> SurfaceMesh:
    """Disjoint union of several meshes (vertex indices are offset, not merged)."""
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += m.n_vertices
    return SurfaceMesh.from_arrays(np.concatenate(verts), np.concatenate(tris))


def make_cube_mesh(center=(0.0, 0.0, 0.0), side: float = 1.0, n: int = 1) -> SurfaceMesh:
    """Structured triangulation of the surface of an axis-aligned cube.

    Each face carries an ``n x n`` grid of squares, each split along the
    same diagonal, giving ``12 n**2`` triangles and ``6 n**2 + 2`` vertices.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not side > 0:
        raise ValueError(f"side must be positive, got {side!r}")
    n = int(n)
    ijk = np.stack(np.meshgrid(*(np.arange(n + 1),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    on_surface = np.any((ijk == 0) | (ijk == n), axis=1)
    lattice = ijk[on_surface]
    index = -np.ones((n + 1,) * 3, dtype=np.int64)
    index[tuple(lattice.T)] = np.arange(len(lattice))

    tris = []
    cells = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), -1).reshape(-1, 2)
    # (u, v) chosen so that e_u x e_v = +e_axis
    for axis, u, v in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for level, (uu, vv) in ((n, (u, v)), (0, (v, u))):
            def node(du, dv, uu=uu, vv=vv, level=level):
                p = np.empty((len(cells), 3), dtype=np.int64)
                p[:, axis] = level
                p[:, uu] = cells[:, 0] + du
                p[:, vv] = cells[:, 1] + dv
                return index[p[:, 0], p[:, 1], p[:, 2]]

            p00, p10, p11, p01 = node(0, 0), node(1, 0), node(1, 1), node(0, 1)
            tris.append(np.stack([p00, p10, p11], axis=1))
            tris.append(np.stack([p00, p11, p01], axis=1))
    tris = np.concatenate(tris)
    verts = np.asarray(center, float) + side * (lattice / n - 0.5)
    return SurfaceMesh.from_arrays(verts, tris)


def make_two_cube_scene(n: int, side: float = 1.0, gap: float = 0.5, axis: int = 0) -> SurfaceMesh:
    """Two cubes facing each other across ``gap`` along ``axis``, symmetric about the origin.

    The positive cube is listed first.
    """
    offset = np.zeros(3)
    offset[axis] = (gap + side) / 2.0
    return merge_meshes(make_cube_mesh(offset, side, n), make_cube_mesh(-offset, side, n))


def mesh_statistics(mesh: SurfaceMesh) -> dict:
    lengths = np.linalg.norm(
        mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]], axis=1
    )
    return {
        "h_max": float(lengths.max()),
        "h_min": float(lengths.min()),
        "n_vertices": mesh.n_vertices,
        "n_edges": mesh.n_edges,
        "n_triangles": mesh.n_triangles,
        "components": mesh.n_components,
        "area": float(mesh.areas.sum()),
    }


# ---------------------------------------------------------------- file I/O


def _tokens(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def read_off(path) -> SurfaceMesh:
    lines = list(_tokens(Path(path).read_text()))
    if not lines or not lines[0].startswith("OFF"):
        raise MeshFormatError(f"{path}: missing OFF header")
    rest = lines[0][3:].split()
    head = rest if rest else lines[1].split()
    body = lines[1:] if rest else lines[2:]
    try:
        nv, nf = int(head[0]), int(head[1])
        verts = np.array([[float(t) for t in body[i].split()[:3]] for i in range(nv)])
        faces = []
        for line in body[nv:nv + nf]:
            parts = line.split()
            if int(parts[0]) != 3:
                raise MeshFormatError(f"{path}: only triangular faces are supported")
            faces.append([int(t) for t in parts[1:4]])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"{path}: malformed OFF file ({exc})") from exc
    if verts.shape != (nv, 3) or len(faces) != nf:
        raise MeshFormatError(f"{path}: truncated OFF file")
    return SurfaceMesh.from_arrays(verts, np.array(faces, dtype=np.int64))


def write_off(mesh: SurfaceMesh, path) -> None:
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} {mesh.n_edges}"]
    out += [" ".join(f"{x:.17g}" for x in v) for v in mesh.vertices]
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(out) + "\n")


def _section(lines, name):
    try:
        start = lines.index(f"${name}")
        end = lines.index(f"$End{name}", start)
    except ValueError:
        raise MeshFormatError(f"missing ${name} section") from None
    return lines[start + 1:end]


def read_gmsh(path) -> SurfaceMesh:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise MeshFormatError(f"{path}: not an ASCII file (binary Gmsh is unsupported)") from None
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        fmt = _section(lines, "MeshFormat")[0].split()
        if not fmt[0].startswith("2") or fmt[1] != "0":
            raise MeshFormatError(f"{path}: unsupported Gmsh format {' '.join(fmt)} (need ASCII 2.x)")
        node_lines = _section(lines, "Nodes")
        n_nodes = int(node_lines[0])
        ids, coords = [], []
        for ln in node_lines[1:1 + n_nodes]:
            p = ln.split()
            ids.append(int(p[0]))
            coords.append([float(t) for t in p[1:4]])
        if len(ids) != n_nodes:
            raise MeshFormatError(f"{path}: truncated $Nodes section")
        lookup = {node: k for k, node in enumerate(ids)}
        elem_lines = _section(lines, "Elements")
        n_elem = int(elem_lines[0])
        tris = []
        for ln in elem_lines[1:1 + n_elem]:
            p = [int(t) for t in ln.split()]
            etype, ntags = p[1], p[2]
            if etype != 2:
                raise MeshFormatError(
                    f"{path}: element {p[0]} has type {etype}; only 3-node triangles (type 2) are supported"
                )
            tris.append([lookup[v] for v in p[3 + ntags:6 + ntags]])
    except MeshFormatError:
        raise
    except (IndexError, ValueError, KeyError) as exc:
        raise MeshFormatError(f"{path}: malformed Gmsh file ({exc!r})") from exc
    return SurfaceMesh.from_arrays(np.array(coords), np.array(tris, dtype=np.int64))


def write_gmsh(mesh: SurfaceMesh, path) -> None:
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} " + " ".join(f"{x:.17g}" for x in v) for i, v in enumerate(mesh.vertices)]
    out += ["$EndNodes", "$Elements", str(mesh.n_triangles)]
    out += [
        f"{k + 1} 2 2 {mesh.component[k] + 1} {mesh.component[k] + 1} {a + 1} {b + 1} {c + 1}"
        for k, (a, b, c) in enumerate(mesh.triangles)
    ]
    out += ["$EndElements"]
    Path(path).write_text("\n".join(out) + "\n")


_READERS = {"off": read_off, "gmsh-ascii-v2": read_gmsh}


def load_mesh(path, format: str | None = None) -> SurfaceMesh:
    """Read an OFF or Gmsh ASCII v2 surface mesh and validate it.

    ``format`` defaults to the file suffix (``.off`` or ``.msh``).
    """
    path = Path(path)
    if format is None:
        suffix = path.suffix.lower()
        format = {".off": "off", ".msh": "gmsh-ascii-v2"}.get(suffix)
        if format is None:
            raise MeshFormatError(f"cannot infer mesh format from suffix {suffix!r}")
    if format not in _READERS:
        raise MeshFormatError(f"unknown mesh format {format!r}; expected one of {sorted(_READERS)}")
    if not path.exists():
        raise FileNotFoundError(path)
    return _READERS[format](path)
