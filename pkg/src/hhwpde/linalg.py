"""Banded and sparse linear algebra for the ADI stages.

Banded matrices use LAPACK-style band storage, ``bands[..., ku + i - j, j]``
holding entry (i, j); leading axes batch independent matrices of identical
size and bandwidths so that whole families of grid lines factor and solve in
vectorized sweeps.  The LU is unpivoted (the implicit ADI matrices are
strongly diagonally dominant for relevant step sizes) with a singular-pivot
guard; skipping pivoting keeps the bandwidth fixed and the results bitwise
deterministic.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BandedMatrix",
    "BandedLU",
    "SparseOperator",
    "SingularPivotError",
    "band_factor",
    "band_solve",
    "sparse_apply",
]

#: relative pivot threshold: pivots below PIVOT_RTOL * max|A| raise
PIVOT_RTOL = 1e-14


class SingularPivotError(np.linalg.LinAlgError):
    """Raised when elimination meets a pivot too small to trust."""


class BandedMatrix:
    """Banded matrix (or batch of them) in band storage."""

    def __init__(self, n: int, kl: int, ku: int, bands: np.ndarray):
        bands = np.asarray(bands, dtype=float)
        if kl < 0 or ku < 0:
            raise ValueError("bandwidths must be nonnegative")
        if bands.shape[-2:] != (kl + ku + 1, n):
            raise ValueError("band storage shape mismatch")
        self.n = n
        self.kl = kl
        self.ku = ku
        self.bands = bands

    @classmethod
    def from_diagonals(cls, n: int, kl: int, ku: int, diags: dict[int, np.ndarray]) -> "BandedMatrix":
        """Build from per-row diagonals: diags[o][..., a] = A[a, a + o].

        Positions outside the matrix are ignored; missing offsets are zero.
        """
        batch = np.broadcast_shapes(*(np.shape(d)[:-1] for d in diags.values())) if diags else ()
        bands = np.zeros(batch + (kl + ku + 1, n))
        for o, diag in diags.items():
            if o > ku or -o > kl:
                raise ValueError(f"offset {o} outside bandwidths")
            d = np.asarray(diag, dtype=float)
            if o >= 0:
                bands[..., ku - o, o:] = d[..., : n - o]
            else:
                bands[..., ku - o, : n + o] = d[..., -o:]
        return cls(n, kl, ku, bands)

    @classmethod
    def from_dense(cls, a: np.ndarray, kl: int, ku: int) -> "BandedMatrix":
        a = np.asarray(a, dtype=float)
        n = a.shape[-1]
        diags = {}
        for o in range(-kl, ku + 1):
            d = np.zeros(a.shape[:-2] + (n,))
            idx = np.arange(max(0, -o), n - max(0, o))
            d[..., idx] = a[..., idx, idx + o]
            diags[o] = d
        return cls.from_diagonals(n, kl, ku, diags)

    def to_dense(self) -> np.ndarray:
        n, kl, ku = self.n, self.kl, self.ku
        out = np.zeros(self.bands.shape[:-2] + (n, n))
        for o in range(-kl, ku + 1):
            idx = np.arange(max(0, -o), n - max(0, o))
            out[..., idx, idx + o] = self.bands[..., ku - o, idx + o]
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Product A @ x along the last axis (batched, broadcasting)."""
        x = np.asarray(x, dtype=float)
        n, kl, ku = self.n, self.kl, self.ku
        y = np.zeros(np.broadcast_shapes(self.bands.shape[:-2], x.shape[:-1]) + (n,))
        for o in range(-kl, ku + 1):
            if o >= 0:
                y[..., : n - o] += self.bands[..., ku - o, o:] * x[..., o:]
            else:
                y[..., -o:] += self.bands[..., ku - o, : n + o] * x[..., : n + o]
        return y


class BandedLU:
    """Reusable unpivoted LU factorization of a BandedMatrix batch."""

    def __init__(self, n: int, kl: int, ku: int, fbands: np.ndarray):
        self.n = n
        self.kl = kl
        self.ku = ku
        self.fbands = fbands

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs along the last axis; batches broadcast."""
        rhs = np.asarray(rhs, dtype=float)
        n, kl, ku = self.n, self.kl, self.ku
        if rhs.shape[-1] != n:
            raise ValueError("rhs length does not match matrix dimension")
        f = self.fbands
        shape = np.broadcast_shapes(f.shape[:-2], rhs.shape[:-1]) + (n,)
        x = np.empty(shape)
        x[...] = rhs
        for k in range(n - 1):
            for q in range(1, min(kl, n - 1 - k) + 1):
                x[..., k + q] -= f[..., ku + q, k] * x[..., k]
        for j in range(n - 1, -1, -1):
            x[..., j] /= f[..., ku, j]
            for p in range(1, min(ku, j) + 1):
                x[..., j - p] -= f[..., ku - p, j] * x[..., j]
        return x


def band_factor(a: BandedMatrix) -> BandedLU:
    """Unpivoted banded LU with singular-pivot guard.

    L's unit diagonal is implicit; multipliers overwrite the subdiagonals
    and U overwrites the rest.  Raises SingularPivotError when a pivot
    falls below PIVOT_RTOL times the matrix max-norm (or is exactly zero).
    """
    n, kl, ku = a.n, a.kl, a.ku
    bands = np.array(a.bands, dtype=float, copy=True)
    tol = PIVOT_RTOL * np.abs(bands).max(axis=(-2, -1))
    for k in range(n):
        piv = bands[..., ku, k]
        if np.any(np.abs(piv) < tol) or np.any(piv == 0.0):
            raise SingularPivotError(f"near-zero pivot in column {k}")
        if k == n - 1:
            break
        for q in range(1, min(kl, n - 1 - k) + 1):
            bands[..., ku + q, k] /= piv
        for p in range(1, min(ku, n - 1 - k) + 1):
            ukp = bands[..., ku - p, k + p]
            for q in range(1, min(kl, n - 1 - k) + 1):
                bands[..., ku + q - p, k + p] -= bands[..., ku + q, k] * ukp
    return BandedLU(n, kl, ku, bands)


def band_solve(lu: BandedLU, rhs: np.ndarray) -> np.ndarray:
    return lu.solve(rhs)


class SparseOperator:
    """COO-assembled sparse operator with CSR-backed products.

    Duplicate (row, col) pairs are summed on finalization; within each row
    the stored columns are ascending, which fixes the accumulation order of
    the product and keeps results reproducible.
    """

    def __init__(self, shape: tuple[int, int], rows=None, cols=None, vals=None):
        self.shape = shape
        self.rows = np.asarray(rows if rows is not None else [], dtype=np.int64)
        self.cols = np.asarray(cols if cols is not None else [], dtype=np.int64)
        self.vals = np.asarray(vals if vals is not None else [], dtype=float)
        if not (len(self.rows) == len(self.cols) == len(self.vals)):
            raise ValueError("rows, cols, vals must have equal lengths")
        self._csr = None

    @property
    def nnz(self) -> int:
        return self.tocsr().nnz

    def tocsr(self):
        if self._csr is None:
            csr = sp.coo_matrix(
                (self.vals, (self.rows, self.cols)), shape=self.shape
            ).tocsr()
            csr.sum_duplicates()
            csr.sort_indices()
            self._csr = csr
        return self._csr

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.shape[1]:
            raise ValueError("dimension mismatch in sparse product")
        return self.tocsr() @ x

    def scaled(self, alpha: float) -> "SparseOperator":
        return SparseOperator(self.shape, self.rows, self.cols, alpha * self.vals)

    def plus(self, other: "SparseOperator") -> "SparseOperator":
        if other.shape != self.shape:
            raise ValueError("shape mismatch in sparse sum")
        return SparseOperator(
            self.shape,
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.vals, other.vals]),
        )

    def todense(self) -> np.ndarray:
        return self.tocsr().toarray()


def sparse_apply(op: SparseOperator, x: np.ndarray) -> np.ndarray:
    return op.apply(x)
