"""Dense linear-solve oracle for the GP tests.

Plain Gaussian elimination with partial pivoting, no factorizations, no
library solvers: deliberately independent of the Cholesky path it checks.
"""

import numpy as np


def solve_gauss(A, b):
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for i in range(n):
        p = i + int(np.argmax(np.abs(A[i:, i])))
        if p != i:
            A[[i, p]] = A[[p, i]]
            b[[i, p]] = b[[p, i]]
        f = A[i + 1:, i] / A[i, i]
        A[i + 1:, i:] -= f[:, None] * A[i, i:]
        b[i + 1:] -= f * b[i]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


def se_kernel(A, B, sf2, ell):
    d2 = np.sum((np.asarray(A)[:, None, :] - np.asarray(B)[None, :, :]) ** 2, axis=2)
    return sf2 * np.exp(-0.5 * d2 / ell**2)


def dense_gp_posterior(X, y, Q, sf2, ell, sn2):
    """Posterior mean/variance at Q via explicit (K + sn2 I) solves."""
    K = se_kernel(X, X, sf2, ell) + sn2 * np.eye(len(X))
    Ks = se_kernel(Q, X, sf2, ell)
    mean = Ks @ solve_gauss(K, np.asarray(y, dtype=float))
    var = np.empty(len(Q))
    for i in range(len(Q)):
        var[i] = sf2 - Ks[i] @ solve_gauss(K, Ks[i])
    return mean, var
