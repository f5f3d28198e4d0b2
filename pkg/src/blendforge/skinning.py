"""Blending weight fields and rotation-cluster assignment.

Weights either come from an external skinning tool (text import) or from the
low Laplace-Beltrami eigenfunctions. Rotation clusters group vertices that
are expected to rotate together; their edge sets are the spokes and rims of
every triangle touching the cluster, so neighboring clusters overlap.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from .mesh import TriMesh, _triangle_half_cotangents
from .rng import resolve_seed
from .spectral import SpectralBasis

SOURCE_LBO = "lbo"
SOURCE_SKELETON = "skeleton"


@dataclass
class WeightField:
    """Per-vertex blending weights, one column per weight function.

    For skeleton imports the rows are non-negative and sum to one. For the
    spectral source the columns are eigenfunctions 1..m verbatim (the
    constant eigenfunction is kept separately in ``constant`` so the
    dictionary can represent pure translations).
    """

    weights: np.ndarray                       # (n, m)
    source: str
    constant: np.ndarray | None = None        # (n,) phi_0, spectral source only
    eigenvalues: np.ndarray | None = None     # (m,) of the weight columns
    cluster_of_vertex: np.ndarray | None = field(default=None)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class RotationClusters:
    """Directed edge sets with cotangent weights, one per rotation cluster."""

    edge_sets: tuple  # of (edges (e, 2) int64, weights (e,) float64)
    cluster_of_vertex: np.ndarray

    @property
    def r(self) -> int:
        return len(self.edge_sets)


def import_skeleton_weights(path, mesh: TriMesh) -> WeightField:
    """Read a skeleton weight file: first line ``n m``, then n rows of m reals.

    Rows whose sum deviates from one by at most 1% are renormalized;
    anything worse, a dimension mismatch, or a clearly negative weight is an
    error.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) < 2:
            raise ValueError(f"{path}: first line must be 'n m'")
        n, m = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (n, m):
        raise ValueError(f"{path}: expected {n}x{m} weights, got {data.shape}")
    if n != mesh.n_vertices:
        raise ValueError(
            f"{path}: weight rows ({n}) do not match mesh vertices ({mesh.n_vertices})"
        )
    if (data < -1e-6).any():
        i, j = np.argwhere(data < -1e-6)[0]
        raise ValueError(f"{path}: negative weight at row {i}, column {j}: {data[i, j]}")
    data = np.clip(data, 0.0, None)
    sums = data.sum(axis=1)
    off = np.abs(sums - 1.0)
    if (off > 0.01).any():
        i = int(np.argmax(off))
        raise ValueError(f"{path}: row {i} sums to {sums[i]:.6f}, outside the 1% tolerance")
    return WeightField(weights=data / sums[:, None], source=SOURCE_SKELETON)


def lbo_weight_field(basis: SpectralBasis, m: int) -> WeightField:
    """Use eigenfunctions 1..m as weights; the constant one rides along."""
    if m > basis.m:
        raise ValueError(f"m={m} exceeds basis size {basis.m}")
    return WeightField(
        weights=basis.eigenfunctions[:, 1 : m + 1].copy(),
        source=SOURCE_LBO,
        constant=basis.eigenfunctions[:, 0].copy(),
        eigenvalues=basis.eigenvalues[1 : m + 1].copy(),
    )


def _spokes_and_rims(mesh: TriMesh, assignment: np.ndarray, r: int):
    """Edge sets per cluster: the 3 edges of every triangle touching it."""
    f = mesh.faces
    w = _triangle_half_cotangents(mesh)
    # edge opposite corner c, listed (origin, tip)
    tri_edges = np.stack([f[:, [1, 2]], f[:, [2, 0]], f[:, [0, 1]]], axis=1)  # (f, 3, 2)
    sets = []
    for k in range(r):
        touches = (assignment[f] == k).any(axis=1)
        if not touches.any():
            sets.append(None)
            continue
        edges = tri_edges[touches].reshape(-1, 2)
        weights = w[touches].reshape(-1)
        sets.append((edges.astype(np.int64), weights))
    return sets


def build_rotation_clusters(
    weight_field: WeightField, mesh: TriMesh, r: int, seed: int | None = None
) -> RotationClusters:
    """Assign each vertex to a rotation cluster and collect the edge sets.

    Skeleton weights cluster by argmax (one cluster per bone); spectral
    weights are k-means clustered in weight space with a fixed seed so the
    result is reproducible. Clusters that end up empty are dropped with a
    warning, decreasing r.
    """
    if r < 1:
        raise ValueError("need r >= 1")
    w = weight_field.weights
    if weight_field.source == SOURCE_SKELETON:
        assignment = np.argmax(w, axis=1)
        r_eff = w.shape[1]
    elif r == 1:
        assignment = np.zeros(mesh.n_vertices, dtype=np.int64)
        r_eff = 1
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # kmeans2 warns on empty clusters
            _, assignment = kmeans2(
                w, min(r, len(w)), iter=100, minit="++", seed=resolve_seed(seed)
            )
        r_eff = min(r, len(w))
    # compact labels, dropping empty clusters
    present = np.unique(assignment)
    if len(present) < r_eff:
        warnings.warn(
            f"{r_eff - len(present)} rotation clusters were empty; using r={len(present)}",
            stacklevel=2,
        )
    relabel = -np.ones(r_eff, dtype=np.int64)
    relabel[present] = np.arange(len(present))
    assignment = relabel[assignment]
    sets = _spokes_and_rims(mesh, assignment, len(present))
    kept = [s for s in sets if s is not None]
    if len(kept) < len(sets):
        # clusters of unreferenced vertices contribute no triangles
        warnings.warn("dropping rotation clusters with no incident triangles", stacklevel=2)
        keep_ids = [k for k, s in enumerate(sets) if s is not None]
        relabel2 = -np.ones(len(sets), dtype=np.int64)
        relabel2[keep_ids] = np.arange(len(keep_ids))
        assignment = relabel2[assignment]
        # strand-free meshes never hit this; map stranded vertices to cluster 0
        assignment[assignment < 0] = 0
    weight_field.cluster_of_vertex = assignment
    return RotationClusters(edge_sets=tuple(kept), cluster_of_vertex=assignment)
