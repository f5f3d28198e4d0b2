"""Triangle meshes, ASCII OFF/OBJ I/O, and the discrete operators built on them.

Everything downstream (spectral weights, ARAP precomputation, registration)
consumes the structures defined here. Meshes are plain vertex/face arrays;
edge-manifoldness is not required so that partial scans with holes and
disconnected islands remain valid inputs.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed; carries the offending line."""


class MeshError(ValueError):
    """Raised for geometric defects (degenerate faces, zero-area triangles)."""


class TriMesh:
    """Shared-topology triangle mesh.

    Parameters
    ----------
    vertices : (n, 3) array_like
        Vertex positions in world units. Order is significant: dense
        correspondence across example poses is by vertex index.
    faces : (f, 3) array_like
        Indices into ``vertices``. Each face must have three distinct
        indices in ``[0, n)``.
    """

    def __init__(self, vertices, faces):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError(f"faces must be (f, 3), got {self.faces.shape}")
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                bad = int(np.argmax((self.faces < 0) | (self.faces >= n)).item() // 3)
                raise MeshError(f"face {bad} references a vertex outside [0, {n})")
            degen = (
                (self.faces[:, 0] == self.faces[:, 1])
                | (self.faces[:, 1] == self.faces[:, 2])
                | (self.faces[:, 2] == self.faces[:, 0])
            )
            if degen.any():
                idx = np.flatnonzero(degen)
                raise MeshError(f"degenerate faces (repeated vertex): {idx.tolist()}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (e, 2) array with edge[0] < edge[1]."""
        e = np.vstack([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def copy_with(self, vertices) -> "TriMesh":
        """New mesh with replaced positions on the same topology."""
        return TriMesh(vertices, self.faces)

    def __repr__(self):  # pragma: no cover
        return f"TriMesh(n={self.n_vertices}, f={self.n_faces})"


@dataclass(frozen=True)
class CotanLaplacian:
    """Cotangent-weight Laplacian with per-vertex Voronoi areas.

    ``L`` is symmetric with non-positive off-diagonals (negative cotangent
    contributions are clamped to zero) and rows that sum to zero.
    ``area_weights`` follows the mixed-area rule, falling back to a
    barycentric third of the face area for obtuse triangles.
    """

    L: sp.csr_matrix
    area_weights: np.ndarray

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def mass_matrix(self) -> sp.dia_matrix:
        return sp.diags(self.area_weights)


def _parse_floats(parts, count, path, lineno):
    if len(parts) < count:
        raise MeshFormatError(f"{path}:{lineno}: expected {count} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts[:count]]
    except ValueError as exc:
        raise MeshFormatError(f"{path}:{lineno}: bad number ({exc})") from exc


def _significant_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_mesh(path, format: str | None = None) -> TriMesh:
    """Load an ASCII OFF or OBJ mesh.

    Parameters
    ----------
    path : str or os.PathLike
        File to read.
    format : {"off", "obj"}, optional
        Declared format; inferred from the extension when omitted.

    Raises
    ------
    MeshFormatError
        On any parse failure, naming the offending line.
    MeshError
        If the parsed mesh violates the TriMesh invariants.
    """
    fmt = (format or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if fmt not in ("off", "obj"):
        raise MeshFormatError(f"unsupported mesh format {fmt!r} (use off or obj)")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if fmt == "off":
        return _load_off(text, str(path))
    return _load_obj(text, str(path))


def _load_off(text, path):
    lines = _significant_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshFormatError(f"{path}: empty file") from None
    counts_line = None
    if header.upper() == "OFF":
        pass
    elif header.upper().startswith("OFF"):
        counts_line = (lineno, header[3:].strip())
    else:
        raise MeshFormatError(f"{path}:{lineno}: missing OFF header")
    if counts_line is None:
        try:
            counts_line = next(lines)
        except StopIteration:
            raise MeshFormatError(f"{path}: missing count line") from None
    lineno, counts = counts_line
    parts = counts.split()
    if len(parts) < 2:
        raise MeshFormatError(f"{path}:{lineno}: count line needs 'n f [e]'")
    try:
        n, f = int(parts[0]), int(parts[1])
    except ValueError:
        raise MeshFormatError(f"{path}:{lineno}: non-integer counts") from None
    vertices = np.empty((n, 3))
    for i in range(n):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(f"{path}: unexpected EOF in vertex block") from None
        vertices[i] = _parse_floats(line.split(), 3, path, lineno)
    faces = np.empty((f, 3), dtype=np.int64)
    for i in range(f):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise MeshFormatError(f"{path}: unexpected EOF in face block") from None
        parts = line.split()
        if not parts or parts[0] != "3":
            raise MeshFormatError(f"{path}:{lineno}: only triangle faces supported")
        if len(parts) < 4:
            raise MeshFormatError(f"{path}:{lineno}: face needs 3 indices")
        try:
            faces[i] = [int(p) for p in parts[1:4]]
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: non-integer face index") from None
    try:
        return TriMesh(vertices, faces)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def _load_obj(text, path):
    vertices, faces = [], []
    for lineno, line in _significant_lines(text):
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            vertices.append(_parse_floats(parts[1:], 3, path, lineno))
        elif tag == "f":
            if len(parts) != 4:
                raise MeshFormatError(f"{path}:{lineno}: only triangle faces supported")
            idx = []
            for p in parts[1:]:
                head = p.split("/")[0]
                try:
                    k = int(head)
                except ValueError:
                    raise MeshFormatError(f"{path}:{lineno}: bad face index {p!r}") from None
                if k <= 0:
                    raise MeshFormatError(
                        f"{path}:{lineno}: OBJ face indices are 1-based, got {k}"
                    )
                idx.append(k - 1)
            faces.append(idx)
        # other OBJ tags (vn, vt, o, g, ...) are ignored
    try:
        return TriMesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
                       np.asarray(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def save_mesh(mesh: TriMesh, path, format: str | None = None) -> None:
    """Write ``mesh`` as ASCII OFF or OBJ.

    Floats are written with shortest round-trip precision, so
    ``load_mesh(save_mesh(m))`` reproduces coordinates exactly.
    """
    fmt = (format or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if fmt not in ("off", "obj"):
        raise MeshFormatError(f"unsupported mesh format {fmt!r} (use off or obj)")
    lines = []
    verts = (f"{float(x)!r} {float(y)!r} {float(z)!r}" for x, y, z in mesh.vertices)
    if fmt == "off":
        lines.append("OFF")
        lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        lines.extend(verts)
        lines.extend(f"3 {i} {j} {k}" for i, j, k in mesh.faces)
    else:
        lines.extend(f"v {line}" for line in verts)
        lines.extend(f"f {i + 1} {j + 1} {k + 1}" for i, j, k in mesh.faces)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _triangle_half_cotangents(mesh: TriMesh):
    """Per-corner half-cotangents, clamped at zero.

    Returns (f, 3) with entry [t, c] = max(cot(angle at corner c), 0) / 2,
    the weight the triangle contributes to the edge opposite corner c.
    Raises on zero-area triangles.
    """
    v = mesh.vertices
    f = mesh.faces
    cots = np.empty((len(f), 3))
    for c in range(3):
        a = v[f[:, (c + 1) % 3]] - v[f[:, c]]
        b = v[f[:, (c + 2) % 3]] - v[f[:, c]]
        cr = np.linalg.norm(np.cross(a, b), axis=1)
        bad = cr <= 1e-300
        if bad.any():
            raise MeshError(f"zero-area faces: {np.flatnonzero(bad).tolist()}")
        cots[:, c] = np.einsum("ij,ij->i", a, b) / cr
    # clamping keeps every edge contribution non-negative, so L stays PSD
    # even on obtuse triangulations (at the cost of deviating from the raw
    # cotangent weights there)
    return 0.5 * np.clip(cots, 0.0, None)


def _mixed_voronoi_areas(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    n = mesh.n_vertices
    areas = np.zeros(n)
    # unclamped cotangents for the area rule
    cot = np.empty((len(f), 3))
    sq = np.empty((len(f), 3))  # squared length of edge opposite corner c
    for c in range(3):
        a = v[f[:, (c + 1) % 3]] - v[f[:, c]]
        b = v[f[:, (c + 2) % 3]] - v[f[:, c]]
        cr = np.linalg.norm(np.cross(a, b), axis=1)
        cot[:, c] = np.einsum("ij,ij->i", a, b) / np.maximum(cr, 1e-300)
        sq[:, c] = np.einsum("ij,ij->i", a - b, a - b)
    tri_area = mesh.face_areas()
    obtuse = (cot < 0.0).any(axis=1)
    # non-obtuse: Voronoi-exact corner areas (1/8) sum |e|^2 cot(opposite)
    for c in range(3):
        c1, c2 = (c + 1) % 3, (c + 2) % 3
        corner = 0.125 * (sq[:, c2] * cot[:, c2] + sq[:, c1] * cot[:, c1])
        contrib = np.where(obtuse, tri_area / 3.0, corner)
        np.add.at(areas, f[:, c], contrib)
    return areas


def cotangent_laplacian(mesh: TriMesh) -> CotanLaplacian:
    """Assemble the cotangent Laplacian and Voronoi area weights.

    The weight of edge (i, j) is the sum over its one or two incident
    triangles of half the cotangent of the opposite angle, each triangle
    contribution clamped at zero. The diagonal is minus the row sum of the
    off-diagonals, so rows sum to zero exactly.
    """
    f = mesh.faces
    w = _triangle_half_cotangents(mesh)
    n = mesh.n_vertices
    # edge opposite corner c connects corners c+1 and c+2
    rows = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    cols = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    vals = np.concatenate([w[:, 0], w[:, 1], w[:, 2]])
    W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    W = (W + W.T).tocsr()
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = sp.diags(deg) - W
    return CotanLaplacian(L=L.tocsr(), area_weights=_mixed_voronoi_areas(mesh))


def vertex_normals(mesh: TriMesh):
    """Angle-weighted vertex normals.

    Returns
    -------
    normals : (n, 3) ndarray
        Unit normals; zero vectors where invalid.
    valid : (n,) bool ndarray
        False for vertices not referenced by any face.
    """
    v = mesh.vertices
    f = mesh.faces
    n = mesh.n_vertices
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norms = np.linalg.norm(fn, axis=1)
    fn = fn / np.maximum(norms, 1e-300)[:, None]
    out = np.zeros((n, 3))
    for c in range(3):
        a = v[f[:, (c + 1) % 3]] - v[f[:, c]]
        b = v[f[:, (c + 2) % 3]] - v[f[:, c]]
        cosang = np.einsum("ij,ij->i", a, b) / np.maximum(
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1), 1e-300
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(out, f[:, c], fn * ang[:, None])
    lens = np.linalg.norm(out, axis=1)
    valid = np.zeros(n, dtype=bool)
    valid[f.ravel()] = True
    valid &= lens > 1e-300
    out[valid] /= lens[valid, None]
    out[~valid] = 0.0
    return out, valid


def _edge_length_graph(mesh: TriMesh) -> sp.csr_matrix:
    e = mesh.edges()
    lens = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sp.coo_matrix((lens, (e[:, 0], e[:, 1])), shape=(n, n))
    return (g + g.T).tocsr()


def geodesic_ball(mesh: TriMesh, seed: int, radius: float) -> np.ndarray:
    """Vertices within graph-geodesic distance ``radius`` of ``seed``.

    Distances are Dijkstra shortest paths over edge lengths, an
    approximation of the polyhedral geodesic that is deterministic and
    adequate for support-region construction. Always contains ``seed``.
    """
    if not 0 <= seed < mesh.n_vertices:
        raise IndexError(f"seed {seed} outside [0, {mesh.n_vertices})")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    g = _edge_length_graph(mesh)
    dist = dijkstra(g, directed=False, indices=seed, limit=radius * (1 + 1e-12))
    ball = np.flatnonzero(dist <= radius)
    if seed not in ball:  # isolated seed still forms its own ball
        ball = np.sort(np.append(ball, seed))
    return ball


def geodesic_distances(mesh: TriMesh, seed: int, limit: float = np.inf) -> np.ndarray:
    """Dijkstra distances from ``seed`` to every vertex (inf beyond limit)."""
    g = _edge_length_graph(mesh)
    return dijkstra(g, directed=False, indices=seed, limit=limit)


def arap_precompute(mesh: TriMesh, clusters):
    """Stack the per-cluster rigidity matrices used by the ARAP energy.

    Parameters
    ----------
    mesh : TriMesh
        Rest-pose geometry supplying the vertex positions V.
    clusters : RotationClusters or sequence of (edges, weights)
        Directed edge lists with their cotangent weights, one entry per
        rotation cluster. Edge sets may overlap; the returned L then
        accumulates the multiplicity, which keeps it consistent with the
        energy the clusters define.

    Returns
    -------
    L : (n, n) csr_matrix
        Sum of the per-cluster edge Laplacians.
    K : (3r, n) csr_matrix
        Vertical stack of the blocks V^T A_k C_k A_k^T.
    """
    gs = cluster_laplacians(mesh.n_vertices, clusters)
    L = sp.csr_matrix((mesh.n_vertices, mesh.n_vertices))
    for G in gs:
        L = L + G
    return L.tocsr(), stack_rigidity_blocks(mesh.vertices, gs)


def cluster_laplacians(n: int, clusters) -> list:
    """One edge Laplacian A_k C_k A_k^T per rotation cluster."""
    edge_sets = getattr(clusters, "edge_sets", clusters)
    if len(edge_sets) == 0:
        raise ValueError("need at least one rotation cluster")
    gs = []
    for k, (edges, weights) in enumerate(edge_sets):
        edges = np.asarray(edges)
        weights = np.asarray(weights, dtype=np.float64)
        if len(edges) == 0:
            raise ValueError(f"rotation cluster {k} has no edges")
        i, j = edges[:, 0], edges[:, 1]
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        vals = np.concatenate([weights, weights, -weights, -weights])
        gs.append(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr())
    return gs


def stack_rigidity_blocks(V: np.ndarray, cluster_laps) -> sp.csr_matrix:
    """Stack the blocks V^T A_k C_k A_k^T into a (3r, n) sparse matrix."""
    blocks = [sp.csr_matrix((G @ V).T) for G in cluster_laps]  # G symmetric
    return sp.vstack(blocks, format="csr")
