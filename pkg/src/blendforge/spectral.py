"""Low eigenpairs of the Laplace-Beltrami operator.

The eigenfunctions double as smooth blending weight functions and their
eigenvalues drive the quadratic smoothness penalty on the transformation
coefficients.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CotanLaplacian


@dataclass(frozen=True)
class SpectralBasis:
    """The ``m + 1`` algebraically smallest eigenpairs of (L, M).

    eigenvalues are ascending with the first numerically zero on connected
    meshes; eigenfunctions are columns of an (n, m+1) matrix, orthonormal in
    the area-weighted inner product.
    """

    eigenvalues: np.ndarray   # (m+1,)
    eigenfunctions: np.ndarray  # (n, m+1)

    @property
    def m(self) -> int:
        return len(self.eigenvalues) - 1

    @property
    def n(self) -> int:
        return self.eigenfunctions.shape[0]


class EigenSolveError(RuntimeError):
    """Eigen iteration failed to converge; message carries the residuals."""


# dense solves are exact but O(n^3); above this size (or whenever few pairs
# are wanted) shift-invert Lanczos is orders of magnitude faster
_DENSE_N = 600


def _dense_pairs(L, areas, k):
    lam, phi = sla.eigh(L.toarray(), np.diag(areas), subset_by_index=[0, k - 1])
    return lam, phi


def _sparse_pairs(L, areas, k):
    M = sp.diags(areas).tocsc()
    scale = abs(L.diagonal()).max()
    # fixed Lanczos start vector: ARPACK's default random v0 would make
    # repeated builds differ in the last bits
    v0 = np.random.default_rng(0x5EED).standard_normal(L.shape[0])
    try:
        lam, phi = spla.eigsh(L.tocsc(), k=k, M=M, sigma=-1e-8 * scale, which="LM", v0=v0)
    except Exception as exc:  # ArpackNoConvergence and factorization issues
        raise EigenSolveError(f"shift-invert eigensolve failed: {exc}") from exc
    order = np.argsort(lam)
    return lam[order], phi[:, order]


def lbo_eigenpairs(lap: CotanLaplacian, m: int) -> SpectralBasis:
    """Compute the ``m + 1`` smallest generalized eigenpairs of (L, M).

    Uses a dense symmetric solver at small n, or when nearly the full
    spectrum is requested, and shift-invert Lanczos otherwise; the sparse
    path falls back to dense (when feasible) if residuals are poor.
    """
    n = lap.n
    k = m + 1
    if k > n:
        raise ValueError(f"m + 1 = {k} exceeds vertex count {n}")
    if (lap.area_weights <= 0).any():
        raise ValueError("area weights must be positive")
    L, areas = lap.L, lap.area_weights
    if n <= _DENSE_N or k >= n - 1:
        lam, phi = _dense_pairs(L, areas, k)
    else:
        try:
            lam, phi = _sparse_pairs(L, areas, k)
            res = _max_rel_residual(L, areas, lam, phi)
            if res > 1e-8:
                raise EigenSolveError(f"residual {res:.2e} after Lanczos")
        except EigenSolveError:
            if n <= 5000:
                lam, phi = _dense_pairs(L, areas, k)
            else:
                raise
    lam = np.clip(lam, 0.0, None)  # kernel pairs may round slightly negative
    # fix signs deterministically: largest-magnitude entry positive
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[idx, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return SpectralBasis(eigenvalues=lam, eigenfunctions=phi * signs)


def _max_rel_residual(L, areas, lam, phi):
    # the kernel pair has |lambda| ~ 0; anchor its denominator at the
    # operator scale so the check stays meaningful
    scale = abs(L.diagonal()).max()
    R = L @ phi - areas[:, None] * phi * lam[None, :]
    num = np.linalg.norm(R, axis=0)
    den = np.abs(lam) * np.linalg.norm(phi, axis=0) + scale * 1e-3
    return float((num / den).max())


def smoothness_matrix(basis: SpectralBasis, dictionary) -> np.ndarray:
    """Diagonal smoothness weights, one entry per dictionary atom.

    An atom built from eigenfunction weight j gets the squared eigenvalue
    of that eigenfunction, replicated across every block the weight appears
    in; constant-blend atoms get zero. Returned as a (b,) diagonal vector.
    """
    diag = np.zeros(dictionary.b)
    for a, atom in enumerate(dictionary.layout):
        if atom.weight is None:
            continue  # constant blend column, zero eigenvalue
        j = atom.weight + 1  # weight column j holds eigenfunction j+1
        if j >= len(basis.eigenvalues):
            raise ValueError(f"atom {a} references weight {atom.weight} outside the basis")
        diag[a] = basis.eigenvalues[j] ** 2
    return diag


def save_basis(basis: SpectralBasis, path) -> None:
    """Cache eigenpairs: int64 header (n, m), then little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", basis.n, basis.m))
        fh.write(basis.eigenvalues.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.eigenfunctions, dtype="<f8").tobytes())


def load_basis(path) -> SpectralBasis:
    with open(path, "rb") as fh:
        n, m = struct.unpack("<qq", fh.read(16))
        lam = np.frombuffer(fh.read(8 * (m + 1)), dtype="<f8").copy()
        phi = np.frombuffer(fh.read(8 * n * (m + 1)), dtype="<f8").reshape(n, m + 1).copy()
    return SpectralBasis(eigenvalues=lam, eigenfunctions=phi)
