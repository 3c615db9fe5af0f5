"""Differential flatness for a multicopter with a zero-yaw attitude chart.

Position derivatives determine the full state: the specific-thrust vector
a + g e3 fixes the body z axis and thrust magnitude, the zero-yaw chart
(body x axis from projecting e1) fixes the rest of the rotation, and body
rates follow from analytic time differentiation of the constructed frame.
The pullback is the exact adjoint of that construction, so gradients of
any function of (R, f, omega) chain back to acceleration and jerk.
"""

import dataclasses

import numpy as np

from .errors import DimensionMismatch, SingularThrust, SingularYaw

__all__ = ["FlatSignal", "QuadState", "GRAVITY", "flat_to_state", "flat_to_state_pullback"]

GRAVITY = 9.81

_THRUST_EPS = 1e-6
_YAW_EPS = 1e-6


@dataclasses.dataclass
class FlatSignal:
    """Position derivatives of one flat output sample (orders 1..3)."""

    vel: np.ndarray
    acc: np.ndarray
    jerk: np.ndarray

    def __post_init__(self):
        for name in ("vel", "acc", "jerk"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise DimensionMismatch(f"{name} must be a 3-vector")
            setattr(self, name, v)


@dataclasses.dataclass
class QuadState:
    """Attitude, specific thrust (m/s^2) and body rates (rad/s)."""

    R: np.ndarray
    f_spec: float
    omega: np.ndarray


def _cross(a, b):
    # np.cross carries heavy axis-normalization overhead on small batches.
    # a and b must already share a (B, 3) shape.
    out = np.empty(a.shape)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _batch(v):
    v = np.asarray(v, dtype=float)
    return v[None, :] if v.ndim == 1 else v


def flat_to_state_batch(acc, jerk, gravity=GRAVITY, with_rates=True):
    """Vectorized flatness map.

    acc, jerk: (B, 3).  Returns (R (B,3,3), f (B,), omega (B,3), cache)
    where the cache carries the intermediates the pullback needs.
    ``with_rates=False`` skips the body-rate chain (omega comes back None)
    for callers that only consume the attitude and thrust.
    Raises SingularThrust / SingularYaw on any degenerate sample.
    """
    a = _batch(acc)
    j = _batch(jerk)
    if a.shape != j.shape or a.shape[-1] != 3:
        raise DimensionMismatch("acc and jerk must both be (B, 3)")
    tv = a.copy()
    tv[:, 2] += gravity
    f = np.sqrt(_dot(tv, tv))
    if np.any(f < _THRUST_EPS):
        raise SingularThrust("specific-thrust vector vanished")
    z = tv / f[:, None]
    # Zero-yaw chart: u = z x e1 = (0, z3, -z2).
    u = np.zeros_like(z)
    u[:, 1] = z[:, 2]
    u[:, 2] = -z[:, 1]
    nu = np.sqrt(u[:, 1] ** 2 + u[:, 2] ** 2)
    if np.any(nu < _YAW_EPS):
        raise SingularYaw("thrust axis aligned with e1; zero-yaw frame undefined")
    y = u / nu[:, None]
    x = _cross(y, z)
    R = np.stack([x, y, z], axis=2)
    cache = {"f": f, "z": z, "u": u, "nu": nu, "y": y, "x": x}
    if not with_rates:
        return R, f, None, cache

    d1 = _dot(z, j)
    num1 = j - z * d1[:, None]
    zd = num1 / f[:, None]
    ud = np.zeros_like(zd)
    ud[:, 1] = zd[:, 2]
    ud[:, 2] = -zd[:, 1]
    d2 = _dot(y, ud)
    num2 = ud - y * d2[:, None]
    yd = num2 / nu[:, None]
    xd = _cross(yd, z) + _cross(y, zd)
    omega = np.stack([_dot(z, yd), _dot(x, zd), _dot(y, xd)], axis=1)
    cache.update(
        d1=d1, num1=num1, zd=zd, ud=ud, d2=d2, num2=num2, yd=yd, xd=xd, j=j
    )
    return R, f, omega, cache


def flat_to_state_pullback_batch(cache, g_R=None, g_f=None, g_omega=None):
    """Exact adjoint of :func:`flat_to_state_batch`.

    Seeds are gradients w.r.t. R (B,3,3), f (B,) and omega (B,3); any may
    be None.  Returns (g_acc, g_jerk), each (B, 3).  Velocity never enters
    the map, so its gradient is identically zero and not returned.  The
    attitude and thrust depend on acceleration alone, so without an omega
    seed the jerk gradient is exactly zero and the rate chain is skipped
    (a rates-free forward cache suffices in that case).
    """
    f = cache["f"]; z = cache["z"]; nu = cache["nu"]; y = cache["y"]
    x = cache["x"]
    B = f.size

    xb = np.zeros((B, 3)); yb = np.zeros((B, 3)); zb = np.zeros((B, 3))
    fb = np.zeros(B)
    nub = np.zeros(B)
    jb = None
    if g_R is not None:
        g_R = np.asarray(g_R, dtype=float).reshape(B, 3, 3)
        xb += g_R[:, :, 0]
        yb += g_R[:, :, 1]
        zb += g_R[:, :, 2]
    if g_f is not None:
        fb += np.asarray(g_f, dtype=float).reshape(B)

    if g_omega is not None:
        d1 = cache["d1"]; d2 = cache["d2"]; zd = cache["zd"]
        ud = cache["ud"]; yd = cache["yd"]; xd = cache["xd"]; j = cache["j"]
        gw = np.asarray(g_omega, dtype=float).reshape(B, 3)
        # omega = (z . yd, x . zd, y . xd)
        zb += gw[:, 0:1] * yd
        ydb = gw[:, 0:1] * z
        xb += gw[:, 1:2] * zd
        zdb = gw[:, 1:2] * x
        yb += gw[:, 2:3] * xd
        xdb = gw[:, 2:3] * y

        # xd = yd x z + y x zd
        ydb += _cross(z, xdb)
        zb += _cross(xdb, yd)
        yb += _cross(zd, xdb)
        zdb += _cross(xdb, y)

        # yd = num2 / nu; num2 = ud - y d2; d2 = y . ud
        num2b = ydb / nu[:, None]
        nub -= _dot(ydb, yd) / nu
        udb = num2b.copy()
        d2b = -_dot(num2b, y)
        yb += -d2[:, None] * num2b + d2b[:, None] * ud
        udb += d2b[:, None] * y

        # ud = (0, zd_z, -zd_y)
        zdb[:, 2] += udb[:, 1]
        zdb[:, 1] -= udb[:, 2]

        # zd = num1 / f; num1 = j - z d1; d1 = z . j
        num1b = zdb / f[:, None]
        fb -= _dot(zdb, zd) / f
        jb = num1b.copy()
        d1b = -_dot(num1b, z)
        zb += -d1[:, None] * num1b + d1b[:, None] * j
        jb += d1b[:, None] * z

    # x = y x z
    yb += _cross(z, xb)
    zb += _cross(xb, y)

    # y = u / nu; nu = |u|
    ub = yb / nu[:, None]
    nub -= _dot(yb, y) / nu
    ub += nub[:, None] * y

    # u = (0, z_z, -z_y)
    zb[:, 2] += ub[:, 1]
    zb[:, 1] -= ub[:, 2]

    # z = tv / f; f = |tv|; tv = a + g e3
    tvb = zb / f[:, None]
    fb -= _dot(zb, z) / f
    tvb += fb[:, None] * z

    if jb is None:
        jb = np.zeros((B, 3))
    return tvb, jb


def flat_to_state(sig, gravity=GRAVITY):
    """Flat signal -> QuadState for a single sample."""
    if not isinstance(sig, FlatSignal):
        raise DimensionMismatch("expected a FlatSignal")
    R, f, w, _ = flat_to_state_batch(sig.acc[None], sig.jerk[None], gravity)
    return QuadState(R[0], float(f[0]), w[0])


def flat_to_state_pullback(sig, g_R=None, g_f=None, g_omega=None, gravity=GRAVITY):
    """Gradients w.r.t. (vel, acc, jerk) of a functional of the state.

    The zero-yaw chart never reads the velocity, so the velocity gradient
    is exactly zero; it is included to give the caller the full order-1..3
    stack.
    """
    if not isinstance(sig, FlatSignal):
        raise DimensionMismatch("expected a FlatSignal")
    _, _, _, cache = flat_to_state_batch(sig.acc[None], sig.jerk[None], gravity)
    if g_R is not None:
        g_R = np.asarray(g_R, dtype=float)[None]
    if g_f is not None:
        g_f = np.asarray([g_f], dtype=float)
    if g_omega is not None:
        g_omega = np.asarray(g_omega, dtype=float)[None]
    ga, gj = flat_to_state_pullback_batch(cache, g_R, g_f, g_omega)
    return np.zeros(3), ga[0], gj[0]
