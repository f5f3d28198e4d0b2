"""Partial-shape registration: feature constraints, nonrigid ICP, evaluation.

A partial scan is matched against the example manifold: sparse feature
points seed averaged-position constraints, a first solve poses the model,
then ICP rounds alternate nearest-neighbor matching with constrained
re-solves until the correspondence distance stops improving.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import TriMesh, cotangent_laplacian, geodesic_distances, vertex_normals
from .solver import ConstraintSet, SolveState

THRESHOLD_GRID = np.round(np.arange(0.0, 0.2 + 1e-9, 0.002), 6)


@dataclass
class PartialScan:
    """Scan geometry with sparse identified features and a known-region mask."""

    mesh: TriMesh
    feature_points: list              # of (scan vertex index, feature id)
    known_mask: np.ndarray | None = None

    def __post_init__(self):
        if len(self.feature_points) < 1:
            raise ValueError("a partial scan needs at least one feature point")
        if self.known_mask is None:
            self.known_mask = np.ones(self.mesh.n_vertices, dtype=bool)
        if not self.known_mask.any():
            raise ValueError("empty known region")


@dataclass
class CorrespondenceMap:
    pairs: np.ndarray                 # (k, 3): model vertex, scan vertex, distance
    rejected_count: int = 0
    round_means: list = field(default_factory=list)

    @property
    def mean_distance(self) -> float:
        return float(self.pairs[:, 2].mean()) if len(self.pairs) else float("inf")


@dataclass
class DistortionCurve:
    thresholds: np.ndarray
    fractions: np.ndarray
    max_relative_pct: float

    def area_under_curve(self) -> float:
        return float(np.trapezoid(self.fractions, self.thresholds))

    def fraction_within(self, threshold: float) -> float:
        i = int(np.argmin(np.abs(self.thresholds - threshold)))
        return float(self.fractions[i])


def _ball_average_row(dists, radius, areas, n):
    members = np.flatnonzero(dists <= radius)
    if len(members) == 0:
        return None
    w = areas[members]
    w = w / w.sum()
    return sp.csr_matrix((w, (np.zeros(len(members), dtype=int), members)), shape=(1, n))


def feature_constraints(scan: PartialScan, model_features: dict, model_mesh: TriMesh,
                        n_circles: int = 10, radius_frac: float = 0.15,
                        model_areas=None) -> ConstraintSet:
    """Averaged-position constraints over nested geodesic balls.

    For every feature point, ``n_circles`` balls with linearly spaced radii
    up to ``radius_frac * sqrt(area)`` each contribute one constraint row:
    the Voronoi-area-weighted average of the model vertices in the ball must
    match the same average over the scan's corresponding ball.
    """
    if n_circles < 1:
        raise ValueError("need at least one circle")
    area = model_mesh.area()
    outer = radius_frac * np.sqrt(area)
    radii = np.linspace(outer / n_circles, outer, n_circles)
    if model_areas is None:
        model_areas = cotangent_laplacian(model_mesh).area_weights
    scan_areas = cotangent_laplacian(scan.mesh).area_weights
    n = model_mesh.n_vertices
    rows, targets = [], []
    for scan_vertex, fid in scan.feature_points:
        if fid not in model_features:
            raise KeyError(f"feature id {fid!r} has no model vertex")
        model_vertex = model_features[fid]
        md = geodesic_distances(model_mesh, model_vertex, limit=outer * 1.001)
        sd = geodesic_distances(scan.mesh, scan_vertex, limit=outer * 1.001)
        for radius in radii:
            row = _ball_average_row(md, radius, model_areas, n)
            if row is None:
                raise ValueError(f"empty model ball around feature {fid}")
            members = np.flatnonzero(sd <= radius)
            if len(members) == 0:
                raise ValueError(f"empty scan ball around feature {fid}")
            w = scan_areas[members]
            targets.append((w / w.sum()) @ scan.mesh.vertices[members])
            rows.append(row)
    H = sp.vstack(rows, format="csr")
    return ConstraintSet(H=H, Y=np.asarray(targets))


def _farthest_point_sample(points: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    chosen = np.empty(k, dtype=int)
    chosen[0] = start
    dist = np.linalg.norm(points - points[start], axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def match_surfaces(deformed: np.ndarray, model_mesh: TriMesh, scan: PartialScan,
                   sample: np.ndarray | None = None, dist_factor: float = 3.0,
                   max_normal_deg: float = 60.0) -> CorrespondenceMap:
    """Nearest-scan-vertex correspondences from the deformed model.

    Pairs farther than ``dist_factor`` times the median distance or with
    normals more than ``max_normal_deg`` apart are rejected; each scan
    vertex keeps only its closest partner.
    """
    posed = model_mesh.copy_with(deformed)
    model_normals, model_valid = vertex_normals(posed)
    scan_normals, scan_valid = vertex_normals(scan.mesh)
    tree = cKDTree(scan.mesh.vertices)
    if sample is None:
        sample = np.arange(model_mesh.n_vertices)
    d, j = tree.query(deformed[sample])
    med = np.median(d)
    cos_min = np.cos(np.deg2rad(max_normal_deg))
    dots = np.einsum("ij,ij->i", model_normals[sample], scan_normals[j])
    ok = (d <= dist_factor * med) & (dots >= cos_min) & model_valid[sample] & scan_valid[j]
    rejected = int(len(sample) - ok.sum())
    mv, sv, dd = sample[ok], j[ok], d[ok]
    # one partner per scan vertex: keep the closest
    order = np.lexsort((dd, sv))
    sv_sorted = sv[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sv_sorted[1:] != sv_sorted[:-1]
    keep = order[first]
    pairs = np.column_stack([mv[keep], sv[keep], dd[keep]])
    return CorrespondenceMap(pairs=pairs, rejected_count=rejected + int((~first).sum()))


def nonrigid_icp(model, scan: PartialScan, init_cs: ConstraintSet,
                 max_rounds: int = 30, dist_factor: float = 3.0,
                 max_normal_deg: float = 60.0, subsample_above: int = 10000,
                 subsample_to: int = 5000, improve_frac: float = 1e-4):
    """Alternate closest-point matching and constrained re-solves.

    ``model`` is a pipeline.BlendModel. Starts from the feature-constraint
    solve, then appends matched positions as extra constraint rows each
    round (features kept). Stops when the mean correspondence distance
    improves by less than ``improve_frac * sqrt(area)``, stops improving,
    or after ``max_rounds``; returns the best state seen and its map.
    """
    state = model.solve(init_cs)
    mesh0 = model.rest_mesh
    sqrt_area = np.sqrt(mesh0.area())
    n = mesh0.n_vertices
    if n > subsample_above:
        sample = _farthest_point_sample(mesh0.vertices, subsample_to)
    else:
        sample = np.arange(n)
    best: tuple[float, SolveState, CorrespondenceMap | None] = (np.inf, state, None)
    round_means: list = []
    prev_mean = np.inf
    for _ in range(max_rounds):
        surface = state.surface()
        cmap = match_surfaces(surface, mesh0, scan, sample, dist_factor, max_normal_deg)
        if len(cmap.pairs) == 0:
            warnings.warn("ICP round accepted no correspondences; stopping", stacklevel=2)
            break
        mean_d = cmap.mean_distance
        if mean_d < best[0]:
            best = (mean_d, state, cmap)
        if mean_d > prev_mean + 1e-9:
            break  # diverging round (not recorded); keep the best state
        round_means.append(mean_d)
        improved = prev_mean - mean_d
        prev_mean = mean_d
        mv = cmap.pairs[:, 0].astype(int)
        extra_H = sp.csr_matrix(
            (np.ones(len(mv)), (np.arange(len(mv)), mv)), shape=(len(mv), n)
        )
        cs_round = ConstraintSet(
            H=sp.vstack([init_cs.H, extra_H], format="csr"),
            Y=np.vstack([init_cs.Y, scan.mesh.vertices[cmap.pairs[:, 1].astype(int)]]),
        )
        state = model.refine(state, cs_round)
        if improved < improve_frac * sqrt_area:
            surface = state.surface()
            cmap = match_surfaces(surface, mesh0, scan, sample, dist_factor, max_normal_deg)
            if cmap.mean_distance < best[0]:
                best = (cmap.mean_distance, state, cmap)
            break
    if best[2] is None:
        cmap = match_surfaces(state.surface(), mesh0, scan, sample, dist_factor,
                              max_normal_deg)
        best = (cmap.mean_distance, state, cmap)
    best[2].round_means = round_means
    return best[1], best[2]


def correspondence_search_features(model, scan: PartialScan, candidates: list,
                                   n_circles: int = 10, radius_frac: float = 0.15):
    """Pick the feature-to-model assignment with the lowest solve energy.

    Each candidate maps feature ids to model vertices; the coarse two-phase
    solve runs per candidate and the smallest minimal-mode energy wins
    (ties break to the earliest candidate).
    """
    if len(candidates) == 0:
        raise ValueError("no candidate assignments")
    best = (np.inf, 0)
    for idx, feats in enumerate(candidates):
        cs = feature_constraints(scan, feats, model.rest_mesh, n_circles, radius_frac,
                                 model_areas=model.areas)
        state = model.solve_coarse(cs)
        if state.energy < best[0] - 1e-15:
            best = (state.energy, idx)
    return best[1]


def evaluate_deformation(result_vertices: np.ndarray, ground_truth: TriMesh) -> DistortionCurve:
    """Cumulative accuracy curve against a ground-truth pose.

    For each threshold t, the fraction of vertices within t * sqrt(area) of
    their true position; also reports the maximal relative distortion as a
    percentage.
    """
    sqrt_area = np.sqrt(ground_truth.area())
    d = np.linalg.norm(result_vertices - ground_truth.vertices, axis=1) / sqrt_area
    fractions = np.array([(d <= t).mean() for t in THRESHOLD_GRID])
    return DistortionCurve(
        thresholds=THRESHOLD_GRID.copy(),
        fractions=fractions,
        max_relative_pct=float(100.0 * d.max()),
    )


def evaluate_correspondence(cmap: CorrespondenceMap, true_scan_vertex: np.ndarray,
                            scan_mesh: TriMesh, area: float | None = None) -> DistortionCurve:
    """Accuracy curve of matched points against true correspondences.

    ``true_scan_vertex[i]`` is the scan vertex that truly corresponds to
    model vertex i (negative when unknown). Distances between the matched
    and true scan positions are normalized by sqrt(area).
    """
    if area is None:
        area = scan_mesh.area()
    sqrt_area = np.sqrt(area)
    mv = cmap.pairs[:, 0].astype(int)
    sv = cmap.pairs[:, 1].astype(int)
    truth = true_scan_vertex[mv]
    known = truth >= 0
    d = np.linalg.norm(
        scan_mesh.vertices[sv[known]] - scan_mesh.vertices[truth[known]], axis=1
    ) / sqrt_area
    fractions = np.array([(d <= t).mean() if len(d) else 0.0 for t in THRESHOLD_GRID])
    return DistortionCurve(
        thresholds=THRESHOLD_GRID.copy(),
        fractions=fractions,
        max_relative_pct=float(100.0 * d.max()) if len(d) else float("nan"),
    )


def remove_vertices(mesh: TriMesh, keep_mask: np.ndarray):
    """Submesh of the kept vertices; returns (mesh, old index per new vertex).

    Faces touching a removed vertex are dropped, then vertices no longer
    referenced by any face are dropped too (scan meshes must not carry
    stranded points).
    """
    keep_mask = np.asarray(keep_mask, dtype=bool)
    face_ok = keep_mask[mesh.faces].all(axis=1)
    faces = mesh.faces[face_ok]
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[faces.ravel()] = True
    old_of_new = np.flatnonzero(used)
    new_of_old = -np.ones(mesh.n_vertices, dtype=np.int64)
    new_of_old[old_of_new] = np.arange(len(old_of_new))
    return TriMesh(mesh.vertices[old_of_new], new_of_old[faces]), old_of_new
