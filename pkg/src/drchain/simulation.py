"""Time-domain simulation of the chain with a delayed resonator switched on at ``switch_time``.

The reduced retarded system is integrated with fixed-step RK4; the delayed absorber
position is read from the stored history by cubic Hermite interpolation, and the
history before ``t = 0`` is the initial state held constant.  The integration loop is
provided by the compiled ``_kernels`` module when available, otherwise by the numpy
implementation in ``_kernels_py``; :func:`use_kernel` switches between them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import SimulationError, ValidationError
from .model import AbsorberModel, ChainModel, HarmonicExcitation
from .stability import build_ddae, reduce_to_retarded
from .tuning import DrFeedback

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_kernel = _compiled or _kernels_py


def available_kernels() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def active_kernel() -> str:
    return "compiled" if _kernel is _compiled else "python"


def use_kernel(name: str) -> None:
    """Select the integration loop: ``"compiled"`` or ``"python"``."""
    global _kernel
    if name == "python":
        _kernel = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise ValidationError("compiled kernel is not available in this build")
        _kernel = _compiled
    else:
        raise ValidationError(f"unknown kernel {name!r}")


@dataclass(frozen=True)
class SimulationConfig:
    """Run protocol.  ``dt`` defaults to :func:`default_dt`; it is then reduced so that
    a whole number of steps ends exactly at ``t_end``."""

    excitation: HarmonicExcitation
    t_end: float = 30.0
    dt: float | None = None
    switch_time: float = 15.0
    initial_state: np.ndarray | None = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValidationError("t_end must be > 0")
        if self.dt is not None and not self.dt > 0:
            raise ValidationError("dt must be > 0")
        if not 0 <= self.switch_time <= self.t_end:
            raise ValidationError("switch_time must lie in [0, t_end]")


def default_dt(tau: float, omega: float) -> float:
    period = 2.0 * math.pi / omega
    return min(tau / 40.0, period / 200.0) if tau > 0 else period / 200.0


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    x_a: np.ndarray
    xdot_a: np.ndarray
    f_a: np.ndarray
    u: np.ndarray
    W: np.ndarray
    W_a: np.ndarray
    p: np.ndarray
    omega: float

    def columns(self) -> dict[str, np.ndarray]:
        """Every exported signal keyed by its CSV header (name and unit)."""
        cols = {"t[s]": self.t}
        d = self.x.shape[1]
        cols.update({f"x{i + 1}[m]": self.x[:, i] for i in range(d)})
        cols.update({f"xdot{i + 1}[m/s]": self.xdot[:, i] for i in range(d)})
        cols.update({"x_a[m]": self.x_a, "xdot_a[m/s]": self.xdot_a, "f_a[N]": self.f_a, "u[N]": self.u})
        cols.update({f"W{i + 1}[J]": self.W[:, i] for i in range(d + 1)})
        cols.update({"W_a[J]": self.W_a, "p[W]": self.p})
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        data = np.column_stack(list(cols.values()))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols.keys())
            w.writerows(data.tolist())


def simulate(model: ChainModel, absorber: AbsorberModel, feedback: DrFeedback, config: SimulationConfig) -> Trajectory:
    exc = config.excitation
    ret = reduce_to_retarded(build_ddae(model, absorber, feedback))
    n, d = ret.dim, model.d
    ia = 2 * d
    active_fb = feedback.g != 0 and config.switch_time < config.t_end
    dt = config.dt if config.dt is not None else default_dt(feedback.tau, exc.omega)
    if active_fb and feedback.tau > 0 and dt > feedback.tau / 20.0 * (1 + 1e-12):
        raise ValidationError(f"dt={dt:g} exceeds tau/20={feedback.tau / 20:g} with active feedback")
    nsteps = int(math.ceil(config.t_end / dt - 1e-9))
    dt = config.t_end / nsteps  # land exactly on t_end

    z0 = np.zeros(n) if config.initial_state is None else np.asarray(config.initial_state, dtype=float)
    if z0.shape != (n,):
        raise ValidationError(f"initial_state must have length {n}")

    if feedback.tau == 0:
        A_act, a1 = ret.A0 + ret.A1, np.zeros(n)
    else:
        A_act, a1 = ret.A0, ret.A1[:, ia]
    try:
        Z, xdel = _kernel.integrate(ret.A0, A_act, a1, ret.B, ia, exc.amplitude, exc.omega,
                                    feedback.tau, dt, nsteps, config.switch_time, z0)
    except FloatingPointError as err:
        step = int(err.args[0]) if err.args else -1
        raise SimulationError(f"non-finite state at t={step * dt:.6g} s") from None

    t = np.arange(nsteps + 1) * dt
    x, xdot = Z[:, :d], Z[:, d:2 * d]
    x_a, xdot_a = Z[:, ia], Z[:, ia + 1]
    on = t >= config.switch_time
    if feedback.tau == 0:
        xdel = x_a
    u = np.where(on, feedback.g * xdel, 0.0)
    p = model.p - 1
    rel, relv = x[:, p] - x_a, xdot[:, p] - xdot_a
    f_a = absorber.k_a * rel + absorber.c_a * relv + u
    ext = np.hstack([np.zeros((t.size, 1)), x, np.zeros((t.size, 1))])
    W = 0.5 * model.stiffnesses[None, :] * np.diff(ext, axis=1) ** 2
    return Trajectory(
        t=t, x=x, xdot=xdot, x_a=x_a, xdot_a=xdot_a, f_a=f_a, u=u, W=W,
        W_a=0.5 * absorber.k_a * rel**2, p=u * relv, omega=exc.omega,
    )


@dataclass(frozen=True)
class SignalMetrics:
    amplitude: float
    mean: float
    max: float


def steady_metrics(traj: Trajectory, window: tuple[float, float]) -> dict[str, SignalMetrics]:
    """Amplitude (half peak-to-peak), mean and max of every signal over ``window``."""
    t0, t1 = window
    if t0 < traj.t[0] - 1e-12 or t1 > traj.t[-1] + 1e-12 or t1 <= t0:
        raise ValidationError("window must lie inside the trajectory")
    if t1 - t0 < 3.0 * 2.0 * math.pi / traj.omega - 1e-12:
        raise ValidationError("window must span at least three excitation periods")
    sel = (traj.t >= t0) & (traj.t <= t1)
    out = {}
    for name, col in traj.columns().items():
        if name == "t[s]":
            continue
        c = col[sel]
        out[name] = SignalMetrics(amplitude=0.5 * float(c.max() - c.min()), mean=float(c.mean()), max=float(c.max()))
    return out
