"""Steady-state phasor analysis of the chain with the target mass stopped.

Phasors follow ``x(t) = Re{x e^{j omega t}}``.

Sign convention: ``f_a = u + k_a (x_p - x_a) + c_a (xdot_p - xdot_a)`` is the force the
absorber link exerts on the absorber mass, so ``m_a xddot_a = f_a`` and mass ``p``
receives the reaction ``-f_a``.  The chain balance therefore reads
``A(omega) x = B_d f_d - B_a f_a``.  The receptance ``x_p / f_a`` at the target stage
is ``-e_{r,p}^T A_R^{-1} D_a``; every downstream formula (resonator gain, absorber-link
energy, control phasor) is written in terms of that receptance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularSubsystemError, ValidationError, ZeroDivisorError
from .model import (
    AbsorberModel,
    ChainModel,
    HarmonicExcitation,
    PartitionedStiffness,
    assemble_matrices,
    chain_selector,
    dynamic_stiffness,
    partition,
)

RCOND_TOL = 1e-12


def to_signal(phasor, omega: float, t):
    """Time signal ``Re{phasor e^{j omega t}}``."""
    return np.real(np.multiply.outer(np.asarray(phasor), np.exp(1j * omega * np.asarray(t))))


def solve_block(A: np.ndarray, rhs: np.ndarray, what: str = "subsystem", scale: float = 0.0) -> np.ndarray:
    """Solve ``A y = rhs`` after a singularity check.

    The smallest singular value is compared with ``max(||A||_2, scale)``; passing the
    norm of the full dynamic stiffness as ``scale`` also catches near-singular 1x1 blocks.
    """
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] < RCOND_TOL * max(sv[0], scale):
        raise SingularSubsystemError(f"{what} dynamic stiffness is singular at this frequency")
    return np.linalg.solve(A, rhs)


@dataclass(frozen=True)
class TargetStageState:
    f_a: complex
    x_R: np.ndarray
    x_V: np.ndarray
    x_a: complex
    u: complex

    @property
    def x_full(self) -> np.ndarray:
        """All ``d`` chain displacement phasors with ``x_s = 0`` inserted."""
        return np.concatenate([self.x_R, [0.0], self.x_V]).astype(complex)


@dataclass(frozen=True)
class EnergyReport:
    """Per-link and absorber-link elastic energy characteristics.

    ``links`` has shape ``(d + 1, 3)`` with columns ``(W_mean, |W_phasor|, W_max)``; row ``i-1``
    is link ``i``.  ``absorber`` is the same triple for the absorber link (``None`` if not computed).
    """

    links: np.ndarray
    absorber: tuple[float, float, float] | None = None
    regime: str = "active"

    @property
    def W_max(self) -> np.ndarray:
        return self.links[:, 2]

    @property
    def W_mean(self) -> np.ndarray:
        return self.links[:, 0]

    @property
    def max_link(self) -> tuple[int, float]:
        """``(link index, W_max)`` of the most loaded link (1-based)."""
        i = int(np.argmax(self.links[:, 2]))
        return i + 1, float(self.links[i, 2])


@dataclass(frozen=True)
class PowerReport:
    p_mean: float
    p_osc_amplitude: float
    P_max: float


def energy_triple(k: float, dx: complex) -> tuple[float, float, float]:
    mean = 0.25 * k * abs(dx) ** 2
    mag = abs(0.25 * k * dx**2)
    return mean, mag, mean + mag


def _partition(model: ChainModel, excitation: HarmonicExcitation) -> PartitionedStiffness:
    return partition(model, assemble_matrices(model), excitation.omega)


def _scale(part: PartitionedStiffness) -> float:
    return float(np.linalg.norm(part.A, 2))


def receptance_p(model: ChainModel, part: PartitionedStiffness) -> complex:
    """``x_p / f_a`` with the target mass stopped."""
    y = solve_block(part.A_R, part.D_a.astype(complex), "resonating subsystem", _scale(part))
    return complex(-y[model.p - 1])


def required_force(model: ChainModel, excitation: HarmonicExcitation) -> complex:
    """Absorber-link force phasor that keeps mass ``s`` at rest.

    Depends only on the chain and the excitation, never on the absorber.
    """
    part = _partition(model, excitation)
    y_R = solve_block(part.A_R, part.D_a.astype(complex), "resonating subsystem", _scale(part))
    coupling = complex(part.a_R @ y_R)
    if abs(coupling) <= RCOND_TOL * np.linalg.norm(part.a_R) * np.linalg.norm(y_R):
        raise ZeroDivisorError("a_R^T A_R^{-1} D_a vanishes; target mass cannot be stopped")
    fd = excitation.amplitude
    if model.s < model.d:
        y_V = solve_block(part.A_V, part.D_d.astype(complex), "vibrating subsystem", _scale(part))
        # chain sees -f_a, hence the sign relative to the force-on-mass-p form
        return complex((part.a_V @ y_V) / coupling * fd)
    return complex(-fd / coupling)


def subsystem_displacements(model: ChainModel, f_a: complex, excitation: HarmonicExcitation):
    """Displacement phasors ``(x_R, x_V)`` of the resonating and vibrating subsystems."""
    part = _partition(model, excitation)
    x_R = -solve_block(part.A_R, part.D_a * f_a, "resonating subsystem", _scale(part))
    x_V = solve_block(part.A_V, part.D_d * excitation.amplitude, "vibrating subsystem", _scale(part))
    return np.asarray(x_R, dtype=complex), np.asarray(x_V, dtype=complex)


def link_energy_maxima(model: ChainModel, x_R, x_V, excitation: HarmonicExcitation | None = None) -> EnergyReport:
    """Elastic energy of every chain link with mass ``s`` as a motionless barrier.

    Link ``i`` joins mass ``i-1`` and mass ``i``; base and stopped-mass positions are zero.
    ``excitation`` is accepted for signature symmetry; the displacements already encode it.
    """
    x_R = np.asarray(x_R, dtype=complex)
    x_V = np.asarray(x_V, dtype=complex)
    d, s = model.d, model.s
    if x_R.size != s - 1 or x_V.size != d - s:
        raise ValidationError("displacement vectors do not match the chain partition")
    # padded with base (0), stopped target (0) and base (0)
    ext = np.concatenate([[0.0], x_R, [0.0], x_V, [0.0]])
    dx = np.diff(ext)
    rows = [energy_triple(k, dxi) for k, dxi in zip(model.stiffnesses, dx)]
    return EnergyReport(links=np.array(rows), regime="active")


def absorber_energy_max(model: ChainModel, absorber: AbsorberModel, f_a: complex, excitation: HarmonicExcitation):
    """Absorber-link energy triple ``(W_mean, |W_phasor|, W_max)`` at the target stage."""
    part = _partition(model, excitation)
    h = receptance_p(model, part)
    w2 = absorber.m_a * excitation.omega**2
    dx = (-1.0 / w2 - h) * f_a  # x_a - x_p
    return energy_triple(absorber.k_a, dx)


def actuation_power(u: complex, x_p: complex, x_a: complex, omega: float) -> PowerReport:
    rel = x_p - x_a
    p_mean = 0.5 * float(np.real(1j * omega * np.conj(u) * rel))
    p_osc = 0.5 * omega * abs(u * rel)
    return PowerReport(p_mean=p_mean, p_osc_amplitude=p_osc, P_max=max(abs(p_osc + p_mean), abs(p_osc - p_mean)))


def control_phasor(model: ChainModel, absorber: AbsorberModel, f_a: complex, excitation: HarmonicExcitation) -> complex:
    part = _partition(model, excitation)
    h = receptance_p(model, part)
    w = excitation.omega
    return complex((1.0 - (1j * w * absorber.c_a + absorber.k_a) * (h + 1.0 / (absorber.m_a * w**2))) * f_a)


def target_stage(model: ChainModel, absorber: AbsorberModel, excitation: HarmonicExcitation) -> TargetStageState:
    f_a = required_force(model, excitation)
    x_R, x_V = subsystem_displacements(model, f_a, excitation)
    x_a = -f_a / (absorber.m_a * excitation.omega**2)
    u = control_phasor(model, absorber, f_a, excitation)
    return TargetStageState(f_a=f_a, x_R=x_R, x_V=x_V, x_a=complex(x_a), u=u)


@dataclass(frozen=True)
class PassiveState:
    x: np.ndarray
    x_a: complex
    f_a: complex
    energy: EnergyReport


def passive_steady_state(model: ChainModel, absorber: AbsorberModel, excitation: HarmonicExcitation) -> PassiveState:
    """Steady state with the feedback switched off (``u = 0``)."""
    mats = assemble_matrices(model)
    w = excitation.omega
    z = 1j * w * absorber.c_a + absorber.k_a
    den = absorber.k_a - absorber.m_a * w**2 + 1j * w * absorber.c_a
    e_p = chain_selector(model.d, model.p)
    # rigid-link limit adds m_a to mass p
    P = dynamic_stiffness(mats, w) - np.outer(mats.B_a, e_p) * (absorber.m_a * w**2 * z / den)
    x = solve_block(P, mats.B_d * excitation.amplitude, "passive system")
    x_p = x[model.p - 1]
    x_a = z / den * x_p
    f_a = -absorber.m_a * w**2 * z / den * x_p
    ext = np.concatenate([[0.0], x, [0.0]])
    rows = [energy_triple(k, dx) for k, dx in zip(model.stiffnesses, np.diff(ext))]
    report = EnergyReport(links=np.array(rows), absorber=energy_triple(absorber.k_a, x_a - x_p), regime="passive")
    return PassiveState(x=np.asarray(x, dtype=complex), x_a=complex(x_a), f_a=complex(f_a), energy=report)


@dataclass(frozen=True)
class ActiveReport:
    """Target-stage state with link/absorber energies and actuation power."""

    stage: TargetStageState
    energy: EnergyReport
    power: PowerReport


def active_report(model: ChainModel, absorber: AbsorberModel, excitation: HarmonicExcitation) -> ActiveReport:
    stage = target_stage(model, absorber, excitation)
    links = link_energy_maxima(model, stage.x_R, stage.x_V)
    energy = EnergyReport(links=links.links, absorber=absorber_energy_max(model, absorber, stage.f_a, excitation))
    x_p = stage.x_full[model.p - 1]
    power = actuation_power(stage.u, x_p, stage.x_a, excitation.omega)
    return ActiveReport(stage=stage, energy=energy, power=power)
