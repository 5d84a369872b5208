"""Pure-Python/numpy integration kernel; same contract as the compiled ``_kernels`` module."""

from __future__ import annotations

import math

import numpy as np


def hermite_delayed(xs, vs, s, h, x_init):
    """Cubic Hermite value of the stored history at time ``s`` (constant before 0)."""
    if s <= 0.0:
        return x_init
    j = int(s // h)
    th = s / h - j
    if th == 0.0:
        return xs[j]
    th2 = th * th
    th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * xs[j] + (th3 - 2 * th2 + th) * h * vs[j]
            + (-2 * th3 + 3 * th2) * xs[j + 1] + (th3 - th2) * h * vs[j + 1])


def integrate(A_pass, A_act, a1, b, ia, amp, omega, tau, dt, nsteps, switch_time, z0):
    """Fixed-step RK4 for ``z' = A z + gate(t) a1 x_a(t - tau) + b amp cos(omega t)``.

    ``A`` switches from ``A_pass`` to ``A_act`` and the gate opens at ``switch_time``.
    Returns ``(Z, xdel)``: states on the grid and the delayed absorber position there.
    Raises ``FloatingPointError`` carrying the step index when the state stops being finite.
    """
    A_pass = np.ascontiguousarray(A_pass, dtype=float)
    A_act = np.ascontiguousarray(A_act, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A_pass.shape[0]
    Z = np.empty((nsteps + 1, n))
    Z[0] = z0
    xs = Z[:, ia]
    vs = Z[:, ia + 1]
    xdel = np.zeros(nsteps + 1)
    x_init = float(z0[ia])
    use_delay = tau > 0.0 and np.any(a1)

    def rhs(t, z, xd):
        active = t >= switch_time
        out = (A_act if active else A_pass) @ z + b * (amp * math.cos(omega * t))
        if active and use_delay:
            out += a1 * xd
        return out

    h = dt
    z = Z[0].copy()
    for k in range(nsteps):
        t = k * h
        if use_delay:
            d0 = hermite_delayed(xs, vs, t - tau, h, x_init)
            dm = hermite_delayed(xs, vs, t + 0.5 * h - tau, h, x_init)
            d1 = hermite_delayed(xs, vs, t + h - tau, h, x_init)
            xdel[k] = d0
        else:
            d0 = dm = d1 = 0.0
        k1 = rhs(t, z, d0)
        k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1, dm)
        k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2, dm)
        k4 = rhs(t + h, z + h * k3, d1)
        z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(k + 1)
        Z[k + 1] = z
    if use_delay:
        xdel[nsteps] = hermite_delayed(xs, vs, nsteps * h - tau, h, x_init)
    return Z, xdel
