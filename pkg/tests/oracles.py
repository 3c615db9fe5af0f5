"""Independent dense reference implementations used by the tests.

Everything here is built from first principles on plain dense LAPACK
routines so that it shares no code path with the package internals.
"""

import math

import numpy as np


def basis_row(t, order, n_coef):
    """Row r such that r @ c = p^(order)(t) for monomial coefficients c."""
    row = np.zeros(n_coef)
    for k in range(order, n_coef):
        row[k] = (math.factorial(k) // math.factorial(k - order)) * t ** (k - order)
    return row


def eval_poly(coeffs, t, order=0):
    """Direct monomial-sum evaluation of one coefficient block (n_coef, m)."""
    return basis_row(t, order, coeffs.shape[0]) @ coeffs


def gram_dense(T, s):
    """(2s, 2s) integral of beta^(s)(t) beta^(s)(t)^T over [0, T]."""
    n = 2 * s
    G = np.zeros((n, n))
    for k in range(s, n):
        ck = math.factorial(k) // math.factorial(k - s)
        for l in range(s, n):
            cl = math.factorial(l) // math.factorial(l - s)
            p = k + l - 2 * s
            G[k, l] = ck * cl * T ** (p + 1) / (p + 1)
    return G


def dense_kkt_oracle(q, T, bc0, bcf, s, continuity_order=None):
    """Equality-constrained QP reference for the spline construction.

    Minimizes sum_i int ||p_i^(s)||^2 subject to boundary derivative
    stacks, interior waypoint equalities, and knot continuity of orders
    0..continuity_order (default 2s-2), via one dense KKT solve per axis.
    Returns (coeffs (M, 2s, m), cost).
    """
    q = np.asarray(q, dtype=float)
    T = np.asarray(T, dtype=float)
    bc0 = np.asarray(bc0, dtype=float)
    bcf = np.asarray(bcf, dtype=float)
    M = T.size
    m = bc0.shape[1]
    n_coef = 2 * s
    N = M * n_coef
    if continuity_order is None:
        continuity_order = 2 * s - 2

    H = np.zeros((N, N))
    for i in range(M):
        blk = slice(i * n_coef, (i + 1) * n_coef)
        H[blk, blk] = gram_dense(T[i], s)

    rows = []
    rhs = []
    for j in range(s):
        r = np.zeros(N)
        r[:n_coef] = basis_row(0.0, j, n_coef)
        rows.append(r)
        rhs.append(bc0[j])
    for i in range(M - 1):
        r = np.zeros(N)
        r[i * n_coef : (i + 1) * n_coef] = basis_row(T[i], 0, n_coef)
        rows.append(r)
        rhs.append(q[i])
        for j in range(continuity_order + 1):
            r = np.zeros(N)
            r[i * n_coef : (i + 1) * n_coef] = basis_row(T[i], j, n_coef)
            r[(i + 1) * n_coef : (i + 2) * n_coef] = -basis_row(0.0, j, n_coef)
            rows.append(r)
            rhs.append(np.zeros(m))
    for j in range(s):
        r = np.zeros(N)
        r[(M - 1) * n_coef :] = basis_row(T[-1], j, n_coef)
        rows.append(r)
        rhs.append(bcf[j])

    A = np.array(rows)
    d = np.array(rhs)
    nc = A.shape[0]
    KKT = np.zeros((N + nc, N + nc))
    KKT[:N, :N] = 2.0 * H
    KKT[:N, N:] = A.T
    KKT[N:, :N] = A
    full_rhs = np.vstack([np.zeros((N, m)), d])
    sol = np.linalg.solve(KKT, full_rhs)
    c = sol[:N]
    cost = float(np.einsum("im,ij,jm->", c, H, c))
    return c.reshape(M, n_coef, m), cost


def random_instance(rng, s, M, m=3, t_range=(0.3, 2.5), scale=2.0):
    """Random (q, T, bc0, bcf) with moderate magnitudes."""
    q = rng.normal(size=(M - 1, m)) * scale
    T = rng.uniform(*t_range, size=M)
    bc0 = rng.normal(size=(s, m)) * 0.5
    bcf = rng.normal(size=(s, m)) * 0.5
    bc0[0] = rng.normal(size=m) * scale
    bcf[0] = rng.normal(size=m) * scale
    return q, T, bc0, bcf


def rel_err(a, b):
    """Symmetric relative difference of arrays or scalars."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1.0)
    return float(np.max(np.abs(a - b))) / scale
