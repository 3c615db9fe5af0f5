"""Monomial basis rows shared by the spline code.

The basis is beta(x) = (1, x, ..., x^(n-1)); its order-j derivative has
entries k!/(k-j)! x^(k-j) for k >= j and zeros below.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def deriv_coeffs(n_coef, order):
    """Falling-factorial coefficients k!/(k-order)! as a length-n_coef row."""
    k = np.arange(n_coef, dtype=float)
    c = np.ones(n_coef)
    for d in range(order):
        c *= k - d
    c[:order] = 0.0
    c.setflags(write=False)
    return c


def power_table(t, n_coef):
    """Powers t^0 .. t^(n_coef-1), shape t.shape + (n_coef,)."""
    t = np.asarray(t, dtype=float)
    P = np.empty(t.shape + (n_coef,))
    P[..., 0] = 1.0
    for k in range(1, n_coef):
        P[..., k] = P[..., k - 1] * t
    return P


def basis(t, order, n_coef, powers=None):
    """Rows beta^(order)(t); shape t.shape + (n_coef,)."""
    if powers is None:
        powers = power_table(t, n_coef)
    out = np.zeros(powers.shape)
    if order < n_coef:
        c = deriv_coeffs(n_coef, order)
        out[..., order:] = c[order:] * powers[..., : n_coef - order]
    return out


def basis_stack(t, orders, n_coef):
    """Stack of derivative rows; shape t.shape + (len(orders), n_coef)."""
    t = np.asarray(t, dtype=float)
    powers = power_table(t, n_coef)
    out = np.zeros(t.shape + (len(orders), n_coef))
    for idx, order in enumerate(orders):
        out[..., idx, :] = basis(t, order, n_coef, powers=powers)
    return out
