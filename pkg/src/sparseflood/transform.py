"""Orthonormal 2D discrete cosine transform used as the sparsifying basis.

Grid fields are real arrays of shape ``(ny, nx)`` (y-outer, row-major).
Coefficient vectors have length ``nx*ny`` and are ordered row-major over
``(ky, kx)``: the coefficient for frequency pair ``(kx, ky)`` sits at linear
index ``ky*nx + kx``. This ordering is fixed and stable across runs.
"""

import numpy as np
from scipy.fft import dctn, idctn

__all__ = ["DctBasis", "dct_matrix_1d", "truncate_top_fraction"]


def dct_matrix_1d(n):
    """Dense orthonormal type-II DCT matrix of size n.

    Row k, column x holds ``c_k * cos(pi*(2x+1)*k / (2n))`` with
    ``c_0 = sqrt(1/n)`` and ``c_k = sqrt(2/n)`` otherwise, which makes the
    matrix orthogonal.
    """
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    mat[0, :] /= np.sqrt(2.0)
    return mat


class DctBasis:
    """Orthonormal separable 2D DCT (type II) on an nx-by-ny grid.

    ``analysis`` maps a field to its coefficient vector, ``synthesis`` maps
    back; since the transform is orthogonal the two are exact inverses and
    Parseval's identity holds. Both a fast separable path (scipy.fft) and an
    explicit dense matrix are provided; they agree to floating tolerance.

    All methods are pure and the object is immutable apart from a lazily
    cached dense matrix, so instances are safe to share across threads.
    """

    def __init__(self, nx, ny):
        nx, ny = int(nx), int(ny)
        if nx < 2 or ny < 2:
            raise ValueError(f"grid must be at least 2x2, got {nx}x{ny}")
        self.nx = nx
        self.ny = ny
        self._matrix = None

    @property
    def n(self):
        """Number of cells (= number of coefficients)."""
        return self.nx * self.ny

    def __repr__(self):
        return f"DctBasis(nx={self.nx}, ny={self.ny})"

    def _check_field(self, field):
        field = np.asarray(field, dtype=float)
        if field.shape != (self.ny, self.nx):
            raise ValueError(
                f"field shape {field.shape} does not match basis grid "
                f"({self.ny}, {self.nx})"
            )
        return field

    def _check_coeffs(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float).ravel()
        if coeffs.size != self.n:
            raise ValueError(
                f"coefficient vector length {coeffs.size} does not match "
                f"basis size {self.n}"
            )
        return coeffs

    def analysis(self, field):
        """Transform a ``(ny, nx)`` field into a coefficient vector of length N."""
        field = self._check_field(field)
        return dctn(field, type=2, norm="ortho").ravel()

    def synthesis(self, coeffs):
        """Inverse transform a coefficient vector back to a ``(ny, nx)`` field."""
        coeffs = self._check_coeffs(coeffs)
        return idctn(coeffs.reshape(self.ny, self.nx), type=2, norm="ortho")

    def analysis_flat(self, values):
        """Analysis of an already-flattened field (row-major, y-outer)."""
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.n:
            raise ValueError(
                f"flat field length {values.size} does not match basis size {self.n}"
            )
        return self.analysis(values.reshape(self.ny, self.nx))

    def synthesis_flat(self, coeffs):
        """Synthesis returning a flattened field instead of a 2D array."""
        return self.synthesis(coeffs).ravel()

    def matrix(self):
        """Dense transform matrix M with ``coeffs = M @ field.ravel()``.

        Built as the Kronecker product of the 1D orthonormal DCT matrices
        (y-outer flattening), cached after first use.
        """
        if self._matrix is None:
            self._matrix = np.kron(dct_matrix_1d(self.ny), dct_matrix_1d(self.nx))
        return self._matrix


def truncate_top_fraction(coeffs, fraction):
    """Keep the ``ceil(fraction*N)`` largest-magnitude coefficients, zero the rest.

    Ties in magnitude are broken by keeping the lower linear index first.
    ``fraction`` must lie in (0, 1]; ``fraction == 1`` returns a copy of the
    input. Idempotent for a fixed fraction.
    """
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    n_keep = int(np.ceil(fraction * coeffs.size))
    # stable sort on descending magnitude: equal magnitudes keep index order
    order = np.argsort(-np.abs(coeffs), kind="stable")
    out = np.zeros_like(coeffs)
    keep = order[:n_keep]
    out[keep] = coeffs[keep]
    return out
