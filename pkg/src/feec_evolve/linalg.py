"""Sparse direct factorizations with SPD verification and residual checks."""

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import NotSPDError, SolverError

__all__ = ["SPDFactor", "SaddleFactor", "block_diagonal_inverse", "check_residual"]


def check_residual(matrix, x, rhs, tol, what="solve"):
    """Return ``||M x - rhs|| / ||rhs||``; raise if it exceeds ``tol``.

    A zero right-hand side requires a zero solution.
    """
    r = matrix @ x - rhs
    scale = np.linalg.norm(rhs)
    if scale == 0.0:
        rel = np.linalg.norm(x)
    else:
        rel = np.linalg.norm(r) / scale
    if not rel <= tol:
        raise SolverError(f"{what}: relative residual {rel:.3e} exceeds {tol:.1e}")
    return rel


class SPDFactor:
    """Symmetric LDL^T-type factorization via SuperLU without pivoting.

    SuperLU runs in symmetric mode with a symmetric fill-reducing ordering
    and zero pivot threshold, so rows and columns share one permutation and
    the diagonal of U holds the LDL^T pivots. All pivots positive is then
    equivalent to positive definiteness of the (symmetric) input.
    """

    def __init__(self, matrix, name="matrix"):
        M = sps.csc_matrix(matrix)
        if M.shape[0] != M.shape[1]:
            raise NotSPDError(f"{name} is not square: {M.shape}")
        asym = abs(M - M.T)
        if asym.nnz and asym.max() > 1e-12 * abs(M).max():
            raise NotSPDError(f"{name} is not symmetric")
        self.matrix = M
        self.name = name
        try:
            self._lu = splu(
                M,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(f"{name}: factorization failed ({exc})") from exc
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NotSPDError(f"{name}: factorization required off-diagonal pivoting")
        pivots = self._lu.U.diagonal()
        if not np.all(pivots > 0.0):
            raise NotSPDError(
                f"{name} is not positive definite (min pivot {pivots.min():.3e})"
            )
        self.min_pivot = float(pivots.min())

    @property
    def shape(self):
        return self.matrix.shape

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))


class SaddleFactor:
    """General sparse LU for indefinite (saddle-point) block systems."""

    def __init__(self, matrix, name="saddle matrix"):
        self.matrix = sps.csc_matrix(matrix)
        try:
            self._lu = splu(self.matrix)
        except RuntimeError as exc:
            raise SolverError(f"{name}: singular ({exc})") from exc

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))


def block_diagonal_inverse(matrix, blocks):
    """Exact inverse of a block-diagonal sparse matrix.

    ``blocks`` is an (nb, k) integer array of the index set of each block.
    """
    M = sps.csr_matrix(matrix)
    nb, k = blocks.shape
    dense = np.empty((nb, k, k))
    for a in range(k):
        for b in range(k):
            dense[:, a, b] = np.asarray(M[blocks[:, a], blocks[:, b]]).ravel()
    inv = np.linalg.inv(dense)
    inv = 0.5 * (inv + inv.transpose(0, 2, 1))
    rows = np.repeat(blocks, k, axis=1).ravel()
    cols = np.tile(blocks, (1, k)).ravel()
    return sps.csr_matrix((inv.ravel(), (rows, cols)), shape=M.shape)
