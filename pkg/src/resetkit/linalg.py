"""Dense helpers for the tiny matrices of reset elements (n <= 4 in practice)."""

import math

import numpy as np

__all__ = ["expm", "charpoly_adjugate", "spectral_radius"]

_PADE_ORDER = 6
_PADE_COEFFS = [
    math.factorial(2 * _PADE_ORDER - k) * math.factorial(_PADE_ORDER)
    / (math.factorial(2 * _PADE_ORDER) * math.factorial(k)
       * math.factorial(_PADE_ORDER - k))
    for k in range(_PADE_ORDER + 1)
]


def expm(A):
    """Matrix exponential by scaling and squaring with a (6, 6) Pade approximant.

    The matrix is scaled so that its infinity norm is at most 1/2, which
    bounds the approximant's relative backward error near unit roundoff.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("expm requires a square matrix")
    norm = np.linalg.norm(A, np.inf)
    s = 0
    if norm > 0.5:
        s = int(math.ceil(math.log2(norm / 0.5)))
    X = A / 2.0**s
    ident = np.eye(n)
    N = _PADE_COEFFS[0] * ident
    D = _PADE_COEFFS[0] * ident
    P = ident
    for k in range(1, _PADE_ORDER + 1):
        P = P @ X
        c = _PADE_COEFFS[k] * P
        N = N + c
        D = D + (-1) ** k * c
    E = np.linalg.solve(D, N)
    for _ in range(s):
        E = E @ E
    return E


def charpoly_adjugate(A):
    """Faddeev-LeVerrier recursion.

    Returns ``(c, Ns)`` with ``det(sI - A) = sum(c[k] s^(n-k))`` (``c[0] = 1``)
    and ``adj(sI - A) = sum(Ns[k] s^(n-1-k))``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    c = [1.0]
    Ns = []
    M = np.eye(n)
    for k in range(1, n + 1):
        Ns.append(M)
        AM = A @ M
        ck = -np.trace(AM) / k
        c.append(ck)
        M = AM + ck * np.eye(n)
    return np.array(c), Ns


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))
