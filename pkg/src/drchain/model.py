"""Physical model types and structural matrix assembly for a serial mass chain.

Index convention
----------------
Mass and link indices are 1-based everywhere in the public API, configs and
reports: masses ``m_1..m_d``, links ``k_1..k_{d+1}`` where link ``i`` joins mass
``i-1`` to mass ``i`` and masses ``0`` and ``d+1`` denote the base. Arrays are
0-based, so mass ``i`` lives at ``masses[i - 1]`` and link ``i`` at
``stiffnesses[i - 1]``. The helpers in this module (``_pos`` and the selector
constructors) are the only places that translate between the two.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D sequence")
    arr.setflags(write=False)
    return arr


def _pos(i: int) -> int:
    """Array position of 1-based mass index ``i``."""
    return i - 1


@dataclass(frozen=True)
class ChainModel:
    """Serial chain of ``d`` masses linked by springs/dampers to each other and to a base at both ends.

    ``p`` is the mass carrying the absorber, ``s`` the target mass; the
    disturbance always acts on mass ``d``.
    """

    masses: np.ndarray
    stiffnesses: np.ndarray
    dampings: np.ndarray
    p: int
    s: int

    def __post_init__(self):
        for name in ("masses", "stiffnesses", "dampings"):
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        d = self.masses.size
        if d < 2:
            raise ValidationError(f"chain needs at least 2 masses, got d={d}")
        for name in ("stiffnesses", "dampings"):
            if getattr(self, name).size != d + 1:
                raise ValidationError(f"{name} must have length d+1={d + 1}")
        for name in ("masses", "stiffnesses", "dampings"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValidationError(f"all {name} must be finite and strictly positive")
        if int(self.p) != self.p or int(self.s) != self.s:
            raise ValidationError("p and s must be integers")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "s", int(self.s))
        if not 1 <= self.p < self.s <= d:
            raise ValidationError(
                f"non-collocation rule violated: need 1 <= p < s <= d, got p={self.p}, s={self.s}, d={d}"
            )

    @property
    def d(self) -> int:
        return self.masses.size


@dataclass(frozen=True)
class AbsorberModel:
    m_a: float
    c_a: float
    k_a: float

    def __post_init__(self):
        for name in ("m_a", "c_a", "k_a"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"absorber {name} must be finite and strictly positive, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class HarmonicExcitation:
    """Disturbance ``f_d(t) = amplitude * cos(omega t)`` acting on mass ``d``.

    The disturbance phasor equals the real ``amplitude``.
    """

    amplitude: float
    omega: float

    def __post_init__(self):
        a, w = float(self.amplitude), float(self.omega)
        if not np.isfinite(a) or a < 0:
            raise ValidationError(f"excitation amplitude must be >= 0, got {a}")
        if not np.isfinite(w) or w <= 0:
            raise ValidationError(f"excitation omega must be > 0, got {w}")
        object.__setattr__(self, "amplitude", a)
        object.__setattr__(self, "omega", w)

    @property
    def period(self) -> float:
        return 2.0 * np.pi / self.omega


@dataclass(frozen=True)
class StructuralMatrices:
    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    B_d: np.ndarray
    B_a: np.ndarray


def _tridiag(links: np.ndarray) -> np.ndarray:
    d = links.size - 1
    out = np.diag(links[:-1] + links[1:])
    inner = links[1:-1]
    out[np.arange(d - 1), np.arange(1, d)] = -inner
    out[np.arange(1, d), np.arange(d - 1)] = -inner
    return out


def chain_selector(d: int, i: int) -> np.ndarray:
    """``e_i`` over the whole chain; the base indices 0 and d+1 give the zero vector."""
    e = np.zeros(d)
    if 1 <= i <= d:
        e[_pos(i)] = 1.0
    return e


def resonating_selector(s: int, i: int) -> np.ndarray:
    """``e_{r,i}`` inside the resonating subsystem (masses 1..s-1); zero for i=0 and i=s."""
    e = np.zeros(s - 1)
    if 1 <= i <= s - 1:
        e[_pos(i)] = 1.0
    return e


def vibrating_selector(d: int, s: int, j: int) -> np.ndarray:
    """``e_{v,j}`` inside the vibrating subsystem (masses s+1..d); zero for j=s and j=d+1."""
    e = np.zeros(d - s)
    if s + 1 <= j <= d:
        e[j - s - 1] = 1.0
    return e


def assemble_matrices(model: ChainModel) -> StructuralMatrices:
    d = model.d
    if d < 2:
        raise ValidationError("chain needs at least 2 masses")
    M = np.diag(model.masses.astype(float))
    K = _tridiag(model.stiffnesses)
    C = _tridiag(model.dampings)
    return StructuralMatrices(M=M, C=C, K=K, B_d=chain_selector(d, d), B_a=chain_selector(d, model.p))


def dynamic_stiffness(mats: StructuralMatrices, omega: float) -> np.ndarray:
    """``A(omega) = -M omega^2 + j omega C + K``."""
    return -mats.M * omega**2 + 1j * omega * mats.C + mats.K


@dataclass(frozen=True)
class PartitionedStiffness:
    """Block split of ``A(omega)`` around the target mass ``s``.

    Blocks of the vibrating subsystem are empty (shape ``(0, 0)``) when ``s == d``.
    """

    omega: float
    A: np.ndarray
    A_R: np.ndarray
    a_R: np.ndarray
    a_ss: complex
    a_V: np.ndarray
    A_V: np.ndarray
    D_a: np.ndarray
    D_d: np.ndarray

    def reassemble(self) -> np.ndarray:
        r, v = self.A_R.shape[0], self.A_V.shape[0]
        out = np.zeros((r + 1 + v, r + 1 + v), dtype=complex)
        out[:r, :r] = self.A_R
        out[:r, r] = self.a_R
        out[r, :r] = self.a_R
        out[r, r] = self.a_ss
        out[r, r + 1:] = self.a_V
        out[r + 1:, r] = self.a_V
        out[r + 1:, r + 1:] = self.A_V
        return out


def partition(model: ChainModel, mats: StructuralMatrices, omega: float) -> PartitionedStiffness:
    if not omega > 0:
        raise ValidationError("omega must be > 0")
    A = dynamic_stiffness(mats, omega)
    d, s = model.d, model.s
    r = _pos(s)
    D_d = np.zeros(d - s)
    if d > s:
        D_d[-1] = 1.0
    return PartitionedStiffness(
        omega=float(omega),
        A=A,
        A_R=A[:r, :r].copy(),
        a_R=A[:r, r].copy(),
        a_ss=complex(A[r, r]),
        a_V=A[r + 1:, r].copy(),
        A_V=A[r + 1:, r + 1:].copy(),
        D_a=resonating_selector(s, model.p),
        D_d=D_d,
    )


# -- parameter ids ---------------------------------------------------------------------------

_CHAIN_PID = re.compile(r"^(m|k|c)_(\d+)$")
_CHAIN_FIELD = {"m": "masses", "k": "stiffnesses", "c": "dampings"}
ABSORBER_PARAMS = ("m_a", "c_a", "k_a")


def parameter_ids(model: ChainModel) -> list[str]:
    d = model.d
    ids = [f"m_{i}" for i in range(1, d + 1)]
    ids += [f"k_{i}" for i in range(1, d + 2)] + [f"c_{i}" for i in range(1, d + 2)]
    return ids + list(ABSORBER_PARAMS)


def get_parameter(model: ChainModel, absorber: AbsorberModel, pid: str) -> float:
    if pid in ABSORBER_PARAMS:
        return getattr(absorber, pid)
    m = _CHAIN_PID.match(pid)
    if not m:
        raise ValidationError(f"unknown parameter id {pid!r}")
    arr = getattr(model, _CHAIN_FIELD[m.group(1)])
    i = int(m.group(2))
    if not 1 <= i <= arr.size:
        raise ValidationError(f"parameter index out of range in {pid!r}")
    return float(arr[_pos(i)])


def with_parameters(model: ChainModel, absorber: AbsorberModel, values: dict[str, float]):
    """Return ``(model, absorber)`` copies with the named parameters replaced."""
    chain = {f: getattr(model, f).copy() for f in _CHAIN_FIELD.values()}
    absorb = {}
    for pid, val in values.items():
        if pid in ABSORBER_PARAMS:
            absorb[pid] = float(val)
            continue
        m = _CHAIN_PID.match(pid)
        if not m:
            raise ValidationError(f"unknown parameter id {pid!r}")
        arr = chain[_CHAIN_FIELD[m.group(1)]]
        i = int(m.group(2))
        if not 1 <= i <= arr.size:
            raise ValidationError(f"parameter index out of range in {pid!r}")
        arr[_pos(i)] = float(val)
    return replace(model, **chain), replace(absorber, **absorb)
