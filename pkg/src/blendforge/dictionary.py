"""The example-based dictionary of weighted vertex positions.

A deformation is a coefficient matrix against the dictionary: the surface is
``atoms @ T``. The first block of atoms holds the raw weight functions
(recovering translations), followed by one block per reference pose holding
every weight function multiplied by each coordinate of that pose.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh, cluster_laplacians, cotangent_laplacian, stack_rigidity_blocks
from .skinning import SOURCE_LBO, RotationClusters, WeightField


@dataclass(frozen=True)
class Atom:
    """Provenance of one dictionary column.

    block is "bar" for weight-function columns and "hat" for weighted
    example coordinates. ``weight`` indexes the weight-field column
    (None marks the constant-blend column appended for spectral weights);
    hat atoms also carry the example and coordinate they were built from.
    """

    block: str
    weight: int | None
    example: int | None = None
    coord: int | None = None
    eigenvalue: float = 0.0  # of the backing weight function, 0 for skeleton


class ExampleSet:
    """Reference poses in dense correspondence plus their rigidity matrices."""

    def __init__(self, meshes, clusters: RotationClusters, areas=None):
        if len(meshes) < 1:
            raise ValueError("need at least one example mesh")
        faces = meshes[0].faces
        n = meshes[0].n_vertices
        for i, m in enumerate(meshes[1:], start=1):
            if m.n_vertices != n or not np.array_equal(m.faces, faces):
                raise ValueError(f"example {i} does not share the reference topology")
        self.meshes = list(meshes)
        self.faces = faces
        self.clusters = clusters
        gs = cluster_laplacians(n, clusters)
        L = gs[0].copy()
        for G in gs[1:]:
            L = L + G
        self.L = L.tocsr()
        self.Ks = [stack_rigidity_blocks(m.vertices, gs) for m in meshes]
        self.tr_vlv = np.array(
            [float(np.sum((self.L @ m.vertices) * m.vertices)) for m in meshes]
        )
        if areas is None:
            areas = cotangent_laplacian(meshes[0]).area_weights
        self.areas = np.asarray(areas, dtype=np.float64)

    @property
    def q(self) -> int:
        return len(self.meshes)

    @property
    def n(self) -> int:
        return len(self.meshes[0].vertices)

    @property
    def r(self) -> int:
        return self.clusters.r

    def vertices(self, ell: int) -> np.ndarray:
        return self.meshes[ell].vertices


class _Projector:
    """Least-squares projection onto a dictionary span via a cached SVD."""

    def __init__(self, atoms: np.ndarray, rcond: float = 1e-10):
        U, s, Vt = np.linalg.svd(atoms, full_matrices=False)
        keep = s > rcond * (s[0] if len(s) else 1.0)
        self._U = U[:, keep]
        self._sinv = 1.0 / s[keep]
        self._V = Vt[keep].T

    def coefficients(self, surface: np.ndarray) -> np.ndarray:
        return self._V @ (self._sinv[:, None] * (self._U.T @ surface))


@dataclass(frozen=True)
class BlendDictionary:
    atoms: np.ndarray          # (n, b)
    layout: tuple              # of Atom, length b
    area_weights: np.ndarray   # (n,) for area-aware atom distances

    @property
    def b(self) -> int:
        return self.atoms.shape[1]

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    def smooth_diag(self) -> np.ndarray:
        """Squared weight-function eigenvalues per atom (zeros for skeleton)."""
        return np.array([a.eigenvalue**2 for a in self.layout])

    def projector(self) -> _Projector:
        proj = self.__dict__.get("_projector")
        if proj is None:
            proj = _Projector(self.atoms)
            object.__setattr__(self, "_projector", proj)
        return proj


def build_dictionary(
    examples: ExampleSet, weight_field: WeightField, constant_atom: bool | None = None
) -> BlendDictionary:
    """Assemble the blended-transformation dictionary.

    Column order is the weight block followed by one block per example; the
    example blocks iterate weights outer and coordinates inner, so the atom
    count is (1 + 3q) * m. Spectral weight fields additionally append the
    constant eigenfunction to the weight block (one extra atom) since their
    weight columns cannot represent a global translation on their own;
    pass ``constant_atom=False`` to suppress it.
    """
    w = weight_field.weights
    if w.shape[0] != examples.n:
        raise ValueError(
            f"weight field is over {w.shape[0]} vertices, examples over {examples.n}"
        )
    if constant_atom is None:
        constant_atom = weight_field.source == SOURCE_LBO and weight_field.constant is not None
    m = w.shape[1]
    q = examples.q
    lam = weight_field.eigenvalues
    cols = [w]
    layout = [
        Atom(block="bar", weight=j, eigenvalue=float(lam[j]) if lam is not None else 0.0)
        for j in range(m)
    ]
    if constant_atom:
        if weight_field.constant is None:
            raise ValueError("weight field has no constant column to append")
        cols.append(weight_field.constant[:, None])
        layout.append(Atom(block="bar", weight=None))
    for ell in range(q):
        v = examples.vertices(ell)
        block = w[:, :, None] * v[:, None, :]  # (n, m, 3)
        cols.append(block.reshape(examples.n, 3 * m))
        layout.extend(
            Atom(
                block="hat",
                weight=j,
                example=ell,
                coord=c,
                eigenvalue=float(lam[j]) if lam is not None else 0.0,
            )
            for j in range(m)
            for c in range(3)
        )
    atoms = np.concatenate(cols, axis=1)
    return BlendDictionary(atoms=atoms, layout=tuple(layout), area_weights=examples.areas)


def _pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", points, points)
    d = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.fill_diagonal(d, 0.0)
    return np.clip(d, 0.0, None)


def _pam(dist: np.ndarray, k: int, max_sweeps: int = 200):
    """PAM k-medoids: greedy build, then best-improvement swap descent."""
    b = dist.shape[0]
    medoids = [int(np.argmin(dist.sum(axis=1)))]
    nearest = dist[:, medoids[0]].copy()
    while len(medoids) < k:
        # adding candidate c saves sum(max(nearest - d[:, c], 0))
        gain = np.maximum(nearest[:, None] - dist, 0.0).sum(axis=0)
        gain[medoids] = -1.0
        c = int(np.argmax(gain))
        medoids.append(c)
        nearest = np.minimum(nearest, dist[:, c])
    medoids = np.array(sorted(medoids))
    for _ in range(max_sweeps):
        med_d = dist[:, medoids]                      # (b, k)
        order = np.argsort(med_d, axis=1)
        d1 = med_d[np.arange(b), order[:, 0]]
        d2 = med_d[np.arange(b), order[:, 1]] if k > 1 else np.full(b, np.inf)
        who = order[:, 0]
        cost = d1.sum()
        best = (0.0, None)
        for oi in range(k):
            base = np.where(who == oi, d2, d1)        # cost if medoid oi removed
            cand_cost = np.minimum(dist, base[:, None]).sum(axis=0)
            cand_cost[medoids] = np.inf
            ci = int(np.argmin(cand_cost))
            delta = cand_cost[ci] - cost
            if delta < best[0] - 1e-15:
                best = (delta, (oi, ci))
        if best[1] is None:
            break
        oi, ci = best[1]
        medoids[oi] = ci
        medoids = np.sort(medoids)
    return medoids


def reduce_dictionary(
    dictionary: BlendDictionary, target_size: int | None = None, seed: int | None = None
) -> BlendDictionary:
    """Shrink the dictionary to k-medoid atoms (default: half the size).

    Medoids are genuine original columns, chosen under the Euclidean
    distance between area-normalized atoms so that densely sampled regions
    do not dominate similarity; provenance records survive untouched.
    The procedure is deterministic (the seed argument is accepted for
    interface stability; the greedy build needs no randomness).
    """
    del seed
    b = dictionary.b
    k = b // 2 if target_size is None else int(target_size)
    if k < 1:
        raise ValueError("target size must be at least 1")
    if k >= b:
        return dictionary
    scaled = dictionary.atoms * np.sqrt(dictionary.area_weights)[:, None]
    dist = np.sqrt(_pairwise_sq_dists(scaled.T))
    keep = _pam(dist, k)
    return BlendDictionary(
        atoms=dictionary.atoms[:, keep].copy(),
        layout=tuple(dictionary.layout[i] for i in keep),
        area_weights=dictionary.area_weights,
    )


def change_dictionary(
    d_from: BlendDictionary, d_to: BlendDictionary, t_from: np.ndarray
) -> np.ndarray:
    """Re-express coefficients in another dictionary over the same mesh.

    Least-squares projection of the current surface onto the new span,
    computed with a pseudo-inverse (1e-10 relative singular value cutoff),
    so rank-deficient dictionaries are handled gracefully.
    """
    if d_to.n != d_from.n:
        raise ValueError("dictionaries must be over the same vertex set")
    return d_to.projector().coefficients(d_from.atoms @ t_from)


def dump_dictionary(dictionary: BlendDictionary, path) -> None:
    """Debug dump: int64 (n, b) header, column-major float64, provenance text."""
    import struct

    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", dictionary.n, dictionary.b))
        fh.write(np.asfortranarray(dictionary.atoms, dtype="<f8").tobytes(order="F"))
        for a in dictionary.layout:
            line = f"{a.block} {a.weight} {a.example} {a.coord} {a.eigenvalue!r}\n"
            fh.write(line.encode())
