"""Matrix-free projections onto the column space of a basis matrix."""

import numpy as np

from .errors import DimensionError

RANK_TOLERANCE = 1e-10


class ProjectionContext:
    """Factorized basis matrix supporting repeated least-squares solves.

    Parameters
    ----------
    basis_matrix : ndarray of shape (n, q)
        Columns spanning the space to project onto.
    rank_tol : float
        Singular values below ``rank_tol`` times the largest one are
        treated as zero.

    Notes
    -----
    A thin SVD ``Z = U S V'`` is stored; ``P_Z A = U_r (U_r' A)``. The
    ``n x n`` projection matrix is never formed.
    """

    def __init__(self, basis_matrix, rank_tol=RANK_TOLERANCE):
        Z = np.array(basis_matrix, dtype=float)
        if Z.ndim != 2:
            raise DimensionError("basis matrix must be two-dimensional")
        self._Z = Z
        self._Z.setflags(write=False)
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
        if s.size and s[0] > 0:
            rank = int(np.sum(s > rank_tol * s[0]))
        else:
            rank = 0
        self._U = U[:, :rank]
        self._s = s[:rank]
        self._V = Vt[:rank].T
        self.effective_rank = rank

    @property
    def basis_matrix(self):
        return self._Z

    @property
    def n(self):
        return self._Z.shape[0]

    @property
    def q(self):
        return self._Z.shape[1]

    def _check_rows(self, A):
        A = np.asarray(A, dtype=float)
        if A.shape[0] != self.n:
            raise DimensionError(f"expected {self.n} rows, got {A.shape[0]}")
        return A

    def project(self, A):
        """``P_Z A`` for a vector or matrix ``A``."""
        A = self._check_rows(A)
        return self._U @ (self._U.T @ A)

    def residualize(self, A):
        """``(I - P_Z) A``, column by column."""
        A = self._check_rows(A)
        return A - self._U @ (self._U.T @ A)

    def solve_spline_coeffs(self, r):
        """Minimum-norm least-squares coefficients of ``r`` on the basis."""
        r = self._check_rows(r)
        return self._V @ ((self._U.T @ r) / self._s if r.ndim == 1
                          else (self._U.T @ r) / self._s[:, None])


def residualize(ctx, A):
    return ctx.residualize(A)


def solve_spline_coeffs(ctx, r):
    return ctx.solve_spline_coeffs(r)
