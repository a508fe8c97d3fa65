"""Vectorization helpers for symmetric-matrix regression.

``vec`` stacks columns.  ``vec_plus`` keeps the diagonal and the strictly
lower triangle of a symmetric matrix, column by column, with the
off-diagonal entries doubled, so that for symmetric ``P``::

    (x kron x)' vec(P) = x' P x = h(x)' vec_plus(P)

where ``h`` is the matching quadratic-monomial map.  ``duplication_w(n)``
returns the ``n^2 x N`` matrix with ``vec(P) = W vec_plus(P)``.
"""

import numpy as np

from .errors import NotSymmetric

SYMMETRY_RTOL = 1e-9


def half_dim(n):
    """Number of free entries in an ``n x n`` symmetric matrix."""
    return n * (n + 1) // 2


def _dim_from_half(N):
    n = int(round((np.sqrt(8 * N + 1) - 1) / 2))
    if half_dim(n) != N:
        raise ValueError(f"length {N} is not a triangular number n(n+1)/2")
    return n


def vec(M):
    """Column-major stacking of a matrix into a 1-D array."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, n, m=None):
    """Inverse of :func:`vec` for an ``n x m`` matrix (square by default)."""
    m = n if m is None else m
    return np.asarray(v, dtype=float).reshape((n, m), order="F")


def symmetrize(P):
    P = np.asarray(P, dtype=float)
    return 0.5 * (P + P.T)


def check_symmetric(P, rtol=SYMMETRY_RTOL, name="matrix"):
    """Raise :class:`NotSymmetric` if ``P`` is asymmetric beyond ``rtol``.

    The asymmetry is measured as ``max|P - P'|`` against ``rtol * ||P||_F``.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotSymmetric(f"{name} must be square, got shape {P.shape}")
    asym = np.abs(P - P.T).max() if P.size else 0.0
    if asym > rtol * np.linalg.norm(P):
        raise NotSymmetric(
            f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return P


def _lower_index(n):
    # column-wise lower triangle: (j, j), (j+1, j), ..., (n-1, j)
    return [(i, j) for j in range(n) for i in range(j, n)]


def vec_plus(P, rtol=SYMMETRY_RTOL):
    """Half-vectorization with doubled off-diagonal entries.

    Parameters
    ----------
    P : (n, n) array_like
        Symmetric matrix.  Rounding-level asymmetry is tolerated and removed
        by symmetrizing before the entries are read.
    rtol : float
        Relative asymmetry tolerance, see :func:`check_symmetric`.

    Returns
    -------
    (n(n+1)/2,) ndarray
        For each column ``j``: ``P[j, j], 2 P[j+1, j], ..., 2 P[n-1, j]``.
    """
    P = symmetrize(check_symmetric(P, rtol, "P"))
    n = P.shape[0]
    out = np.empty(half_dim(n))
    for k, (i, j) in enumerate(_lower_index(n)):
        out[k] = P[i, j] if i == j else 2.0 * P[i, j]
    return out


def inv_vec_plus(v, n=None):
    """Rebuild the symmetric matrix from its :func:`vec_plus` image."""
    v = np.asarray(v, dtype=float).ravel()
    if n is None:
        n = _dim_from_half(v.size)
    elif v.size != half_dim(n):
        raise ValueError(f"expected {half_dim(n)} entries for n={n}, got {v.size}")
    P = np.empty((n, n))
    for k, (i, j) in enumerate(_lower_index(n)):
        val = v[k] if i == j else 0.5 * v[k]
        P[i, j] = P[j, i] = val
    return P


def duplication_w(n):
    """Matrix ``W`` (``n^2 x N``) with ``vec(P) = W @ vec_plus(P)``.

    Diagonal positions carry 1; each off-diagonal pair carries 1/2 because
    ``vec_plus`` stores the doubled entry.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    W = np.zeros((n * n, half_dim(n)))
    for k, (i, j) in enumerate(_lower_index(n)):
        if i == j:
            W[j * n + i, k] = 1.0
        else:
            W[j * n + i, k] = 0.5
            W[i * n + j, k] = 0.5
    return W


def kron(A, B):
    """Kronecker product of two matrices (vectors are treated as rows/cols as given)."""
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))
