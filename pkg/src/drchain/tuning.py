"""Gain/delay synthesis of the delayed-resonator position feedback ``u(t) = g x_a(t - tau)``."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import TuningError, ValidationError
from .model import AbsorberModel, ChainModel, HarmonicExcitation, assemble_matrices, partition
from .phasor import receptance_p


class Branch(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class DrFeedback:
    g: float
    tau: float
    branch: Branch | None = None
    k: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.g) or not np.isfinite(self.tau) or self.tau < 0:
            raise ValidationError(f"feedback needs finite g and tau >= 0, got g={self.g}, tau={self.tau}")

    @classmethod
    def passive(cls) -> "DrFeedback":
        return cls(g=0.0, tau=0.0)


@dataclass(frozen=True)
class BranchPolicy:
    """Restricts the selection to one branch and/or one branch index ``k``.

    ``k`` must yield a nonnegative delay on the chosen branch(es).
    """

    branch: Branch | None = None
    k: int | None = None


@dataclass(frozen=True)
class TuningSet:
    q: complex
    omega: float
    candidates: tuple[DrFeedback, ...]
    selected: DrFeedback


def compute_q(model: ChainModel, absorber: AbsorberModel, excitation: HarmonicExcitation) -> complex:
    """``Q(omega)`` such that the resonator realises the required force iff ``g e^{-j omega tau} = Q``."""
    w = excitation.omega
    part = partition(model, assemble_matrices(model), w)
    h = receptance_p(model, part)
    mw2 = absorber.m_a * w**2
    return complex(-mw2 * (1.0 - (1j * w * absorber.c_a + absorber.k_a) * (h + 1.0 / mw2)))


def _arg(q: complex) -> float:
    a = math.atan2(q.imag, q.real)
    return math.pi if a <= -math.pi else a


def _delay(branch: Branch, arg_q: float, k: int, omega: float) -> float:
    shift = 0.0 if branch is Branch.PLUS else math.pi
    return (shift - arg_q + 2.0 * k * math.pi) / omega


def _first_k(branch: Branch, arg_q: float, omega: float) -> int:
    shift = 0.0 if branch is Branch.PLUS else math.pi
    k = math.ceil((arg_q - shift) / (2.0 * math.pi))
    while _delay(branch, arg_q, k, omega) < 0:
        k += 1
    while _delay(branch, arg_q, k - 1, omega) >= 0:
        k -= 1
    return k


def tune_q(q: complex, omega: float, policy: BranchPolicy | None = None) -> TuningSet:
    if q == 0 or not np.isfinite(abs(q)):
        raise TuningError("Q(omega) is zero or non-finite; no resonator feedback can be synthesised")
    policy = policy or BranchPolicy()
    arg_q = _arg(q)
    branches = [policy.branch] if policy.branch is not None else [Branch.PLUS, Branch.MINUS]
    cands = []
    for br in branches:
        g = abs(q) if br is Branch.PLUS else -abs(q)
        k0 = _first_k(br, arg_q, omega)
        ks = {k0, k0 + 1}
        if policy.k is not None:
            ks.add(policy.k)
        for k in sorted(ks):
            tau = _delay(br, arg_q, k, omega)
            if tau >= 0:
                cands.append(DrFeedback(g=g, tau=tau, branch=br, k=k))
    # ascending delay; PLUS wins exact ties
    cands.sort(key=lambda c: (c.tau, c.branch is not Branch.PLUS))
    pool = cands if policy.k is None else [c for c in cands if c.k == policy.k]
    if not pool:
        raise ValidationError(f"branch index k={policy.k} gives a negative delay")
    return TuningSet(q=q, omega=omega, candidates=tuple(cands), selected=pool[0])


def tune(
    model: ChainModel,
    absorber: AbsorberModel,
    excitation: HarmonicExcitation,
    branch_policy: BranchPolicy | None = None,
) -> TuningSet:
    """Enumerate both sign branches and select the smallest nonnegative delay (subject to ``branch_policy``)."""
    return tune_q(compute_q(model, absorber, excitation), excitation.omega, branch_policy)
