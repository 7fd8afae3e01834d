"""Sparse storage, assembly scatter, and direct solution of linear systems.

Matrices are scipy.sparse CSR matrices in canonical form (sorted column
indices, no duplicate entries) and vectors are plain 1-D numpy arrays.
Solves use a sparse LU factorization and every solve is verified against a
relative-residual contract.  All operations are deterministic: identical
inputs produce bitwise-identical outputs.
"""

import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

RESIDUAL_TOL = 1e-10


class LinearSolveError(RuntimeError):
    """A direct solve failed its residual contract."""


class SingularSystemError(LinearSolveError):
    """The factorization detected a (numerically) singular matrix."""


class CooBuilder:
    """Triplet accumulator for sparse assembly.

    Duplicate (row, col) entries are summed exactly once at finalization.
    Triplets are canonically ordered (by row, column, then value) before
    summation, so the finalized matrix does not depend on insertion order.
    """

    def __init__(self, nrows, ncols):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        self._rows = []
        self._cols = []
        self._vals = []

    def add(self, i, j, v):
        """Add a single triplet."""
        self.add_batch(
            np.asarray([i], dtype=np.int64),
            np.asarray([j], dtype=np.int64),
            np.asarray([v], dtype=float),
        )

    def add_batch(self, rows, cols, vals):
        """Add arrays of triplets (flattened together)."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols, vals must have equal length")
        if len(rows) and (
            rows.min() < 0
            or rows.max() >= self.nrows
            or cols.min() < 0
            or cols.max() >= self.ncols
        ):
            raise IndexError(
                f"triplet index out of range for {self.nrows}x{self.ncols} matrix"
            )
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(vals)

    def finalize(self):
        """Sum duplicates and return the canonical CSR matrix."""
        if not self._rows:
            return sparse.csr_matrix((self.nrows, self.ncols))
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        if not np.isfinite(vals).all():
            raise ValueError("non-finite value in assembly triplets")
        order = np.lexsort((vals, cols, rows))
        mat = sparse.coo_matrix(
            (vals[order], (rows[order], cols[order])),
            shape=(self.nrows, self.ncols),
        ).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat


def finalize(builder):
    """Finalize a CooBuilder into canonical CSR form."""
    return builder.finalize()


def spmv(A, x):
    """Sparse matrix-vector product with dimension checking."""
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def solve_direct(A, b):
    """Solve A x = b by sparse LU with partial pivoting.

    Raises
    ------
    SingularSystemError
        If the factorization fails (message includes the pivot the
        factorization reported).
    LinearSolveError
        If the relative residual ||Ax - b||_2 / max(||b||_2, 1e-300)
        exceeds RESIDUAL_TOL.
    """
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix is not square: {A.shape}")
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} vs rhs {b.shape}")
    try:
        lu = splu(sparse.csc_matrix(A))
    except RuntimeError as exc:  # SuperLU reports the failing pivot
        raise SingularSystemError(f"sparse LU factorization failed: {exc}") from exc
    x = lu.solve(b)
    if not np.isfinite(x).all():
        raise SingularSystemError("solve produced non-finite entries")
    residual = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300)
    if residual > RESIDUAL_TOL:
        raise LinearSolveError(
            f"direct solve residual {residual:.3e} exceeds {RESIDUAL_TOL:.1e}"
        )
    return x


def border_with_vector(A, w):
    """Append one row/column carrying the weights w to a square matrix.

    Used to pin zero-mean constraints: the bordered system
    [[A, w], [w^T, 0]] enforces w . x = 0 through a Lagrange multiplier
    that is discarded after the solve.
    """
    w = np.asarray(w, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or w.shape != (n,):
        raise ValueError("bordering requires a square matrix and matching vector")
    col = sparse.csr_matrix(w.reshape(n, 1))
    row = sparse.csr_matrix(w.reshape(1, n))
    return sparse.bmat([[A, col], [row, None]], format="csr")


def solve_zero_mean(A, w, b, pin_index=0):
    """Solve the bordered system [[A, w], [w^T, 0]] [x; mu] = [b; 0].

    Returns x with the multiplier discarded.  The border row/column is
    dense, which wrecks fill-reducing orderings if factored directly, so
    the solve goes through T = A + sigma * e_r e_r^T (one extra nonzero):
    with x0 = T\\b, x1 = T\\w, x2 = T\\e_r, the combination
    x = x0 - mu*x1 + beta*x2 solves the bordered system exactly once
    (mu, beta) satisfy a 2x2 system collecting the constraint w.x = 0 and
    the pin self-consistency beta = sigma * x_r.  The pin makes T
    nonsingular even when A carries the constant nullspace the constraint
    is there to remove.  The result is residual-checked against the
    bordered operator, with a direct factorization of the bordered matrix
    as fallback.
    """
    b = np.asarray(b, dtype=float)
    w = np.asarray(w, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1] or w.shape != (n,) or b.shape != (n,):
        raise ValueError("inconsistent shapes in bordered solve")
    r = int(pin_index)
    A = sparse.csc_matrix(A)
    sigma = float(np.abs(A.data).max()) if A.nnz else 1.0
    pin = sparse.csc_matrix(
        (np.array([sigma]), (np.array([r]), np.array([r]))), shape=(n, n)
    )
    try:
        # the saddle pattern is structurally symmetric; a symmetric-mode
        # factorization roughly halves the fill of plain COLAMD here, and
        # the residual check below guards the relaxed pivoting
        lu = splu(
            A + pin,
            permc_spec="MMD_AT_PLUS_A",
            options={"SymmetricMode": True, "DiagPivotThresh": 1e-3},
        )
        x0 = lu.solve(b)
        x1 = lu.solve(w)
        e_r = np.zeros(n)
        e_r[r] = 1.0
        x2 = lu.solve(e_r)
        m = np.array(
            [
                [w @ x1, -(w @ x2)],
                [sigma * x1[r], 1.0 - sigma * x2[r]],
            ]
        )
        rhs2 = np.array([w @ x0, sigma * x0[r]])
        mu, beta = np.linalg.solve(m, rhs2)
        x = x0 - mu * x1 + beta * x2
        num = np.linalg.norm(A @ x + mu * w - b) ** 2 + (w @ x) ** 2
        den = max(np.linalg.norm(b), 1e-300)
        ok = np.isfinite(x).all() and math.sqrt(num) / den <= RESIDUAL_TOL
    except (RuntimeError, np.linalg.LinAlgError):
        ok = False
    if ok:
        return x
    # fallback: factor the bordered operator directly
    full = solve_direct(border_with_vector(A, w), np.concatenate([b, [0.0]]))
    return full[:-1]
