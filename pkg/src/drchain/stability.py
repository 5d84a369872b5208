"""Closed-loop delay system: descriptor model, retarded reduction and characteristic roots.

The closed loop is first written as a delay differential-algebraic system
``E x' = A0 x + A1 x(t - tau) + B f_d`` with state ``[x; x'; x_a; x_a'; f_a; u]``.
The two algebraic rows (absorber-link force balance and control law) are eliminated
to obtain the retarded system ``z' = A0r z + A1r z(t - tau)`` of dimension ``2d + 2``,
whose rightmost roots are found by Chebyshev collocation of the infinitesimal
generator followed by Newton refinement on ``det(lambda I - A0r - A1r e^{-lambda tau})``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SpectrumError, ValidationError
from .model import AbsorberModel, ChainModel, assemble_matrices
from .tuning import DrFeedback

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DdaeSystem:
    E: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    B: np.ndarray
    tau: float

    @property
    def n_algebraic(self) -> int:
        return int(np.sum(np.all(self.E == 0, axis=1)))


@dataclass(frozen=True)
class RetardedSystem:
    A0: np.ndarray
    A1: np.ndarray
    tau: float
    B: np.ndarray

    @property
    def dim(self) -> int:
        return self.A0.shape[0]

    @property
    def delay_free(self) -> bool:
        return self.tau == 0 or not np.any(self.A1)


@dataclass(frozen=True)
class SpectrumOptions:
    rhp_bound: float = -1.2
    grid_size: int = 30
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    adaptive: bool = True
    abscissa_tol: float = 1e-6
    max_size: int = 1200
    residual_tol: float = 1e-8

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValidationError("grid_size must be >= 2")
        if self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise ValidationError("newton_tol must be > 0 and newton_max_iter >= 1")


@dataclass(frozen=True)
class Spectrum:
    roots: np.ndarray
    abscissa: float
    residuals: np.ndarray
    grid_size: int = 0
    dropped: tuple = field(default_factory=tuple)


def build_ddae(model: ChainModel, absorber: AbsorberModel, feedback: DrFeedback) -> DdaeSystem:
    if feedback.tau < 0:
        raise ValidationError("feedback delay must be nonnegative")
    mats = assemble_matrices(model)
    d = model.d
    n = 2 * d + 4
    ix, iv, ia, iva, ifa, iu = 0, d, 2 * d, 2 * d + 1, 2 * d + 2, 2 * d + 3
    p = model.p - 1

    E = np.zeros((n, n))
    E[:d, :d] = np.eye(d)
    E[iv:iv + d, iv:iv + d] = mats.M
    E[ia, ia] = 1.0
    E[iva, iva] = absorber.m_a

    A0 = np.zeros((n, n))
    A0[:d, iv:iv + d] = np.eye(d)
    A0[iv:iv + d, :d] = -mats.K
    A0[iv:iv + d, iv:iv + d] = -mats.C
    A0[iv:iv + d, ifa] = -mats.B_a  # reaction of the absorber link on mass p
    A0[ia, iva] = 1.0
    A0[iva, ifa] = 1.0
    A0[ifa, ix + p] = absorber.k_a
    A0[ifa, iv + p] = absorber.c_a
    A0[ifa, ia] = -absorber.k_a
    A0[ifa, iva] = -absorber.c_a
    A0[ifa, ifa] = -1.0
    A0[ifa, iu] = 1.0
    A0[iu, iu] = -1.0

    A1 = np.zeros((n, n))
    A1[iu, ia] = feedback.g

    B = np.zeros(n)
    B[iv:iv + d] = mats.B_d
    return DdaeSystem(E=E, A0=A0, A1=A1, B=B, tau=float(feedback.tau))


def reduce_to_retarded(ddae: DdaeSystem) -> RetardedSystem:
    """Eliminate the algebraic rows, leaving an explicit retarded delay system."""
    alg = np.all(ddae.E == 0, axis=1)
    dif = ~alg
    if not np.array_equal(np.all(ddae.E == 0, axis=0), alg):
        raise ValidationError("E must be block-diagonal with a zero algebraic block")
    if np.any(ddae.A1[np.ix_(dif, alg)]) or np.any(ddae.A1[np.ix_(alg, alg)]):
        raise ValidationError("delayed algebraic variables would make the system neutral; unsupported")
    E11 = ddae.E[np.ix_(dif, dif)]
    A0zz, A0zy = ddae.A0[np.ix_(dif, dif)], ddae.A0[np.ix_(dif, alg)]
    A0yz, A0yy = ddae.A0[np.ix_(alg, dif)], ddae.A0[np.ix_(alg, alg)]
    A1zz, A1yz = ddae.A1[np.ix_(dif, dif)], ddae.A1[np.ix_(alg, dif)]
    # y = -A0yy^{-1} (A0yz z + A1yz z(t - tau) + B_y f_d)
    Y0 = -np.linalg.solve(A0yy, A0yz)
    Y1 = -np.linalg.solve(A0yy, A1yz)
    Yb = -np.linalg.solve(A0yy, ddae.B[alg])
    A0r = np.linalg.solve(E11, A0zz + A0zy @ Y0)
    A1r = np.linalg.solve(E11, A1zz + A0zy @ Y1)
    Br = np.linalg.solve(E11, ddae.B[dif] + A0zy @ Yb)
    return RetardedSystem(A0=A0r, A1=A1r, tau=ddae.tau, B=Br)


def _backward_error(E, A0, A1, tau: float, lam: complex) -> float:
    """Normwise backward error ``smin(H) / (|lam| |E| + |A0| + |e^{-lam tau}| |A1|)``."""
    ex = np.exp(-lam * tau)
    H = E * lam - A0 - A1 * ex
    smin = np.linalg.svd(H, compute_uv=False)[-1]
    scale = abs(lam) * np.linalg.norm(E, 2) + np.linalg.norm(A0, 2) + abs(ex) * np.linalg.norm(A1, 2)
    return float(smin / scale) if scale > 0 else float(smin)


def char_residual(ddae: DdaeSystem, lam: complex) -> float:
    """Backward error of ``lam`` for ``E lam - A0 - A1 e^{-lam tau}``; zero at an exact root."""
    return _backward_error(ddae.E, ddae.A0, ddae.A1, ddae.tau, lam)


def cheb_nodes(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev extremal nodes ``cos(pi i / N)`` on [-1, 1] and the differentiation matrix."""
    i = np.arange(N + 1)
    x = np.cos(np.pi * i / N)
    c = np.where((i == 0) | (i == N), 2.0, 1.0) * (-1.0) ** i
    dX = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def generator_matrix(ret: RetardedSystem, N: int) -> np.ndarray:
    """Collocation of the infinitesimal generator on ``[-tau, 0]`` with ``N + 1`` nodes."""
    n = ret.dim
    _, D = cheb_nodes(N)
    A = np.zeros((n * (N + 1), n * (N + 1)))
    A[:n, :n] = ret.A0
    A[:n, n * N:] += ret.A1  # the last node sits at theta = -tau
    A[n:, :] = np.kron(D[1:, :] * (2.0 / ret.tau), np.eye(n))
    return A


def newton_root(ret: RetardedSystem, lam0: complex, tol: float = 1e-10, max_iter: int = 20):
    """Newton iteration on ``det H(lam)`` using ``det'/det = tr(H^{-1} H')``.

    Returns ``(lam, converged)``; one extra step is taken after the tolerance is met.
    """
    lam = complex(lam0)
    I = np.eye(ret.dim)
    for _ in range(max_iter):
        ex = np.exp(-lam * ret.tau)
        H = lam * I - ret.A0 - ret.A1 * ex
        dH = I + ret.tau * ret.A1 * ex
        try:
            tr = np.trace(np.linalg.solve(H, dH))
        except np.linalg.LinAlgError:
            return lam, True
        if tr == 0 or not np.isfinite(tr):
            return lam, False
        step = -1.0 / tr
        lam += step
        if abs(step) < tol * (1.0 + abs(lam)):
            ex = np.exp(-lam * ret.tau)
            H = lam * I - ret.A0 - ret.A1 * ex
            try:
                tr = np.trace(np.linalg.solve(H, I + ret.tau * ret.A1 * ex))
                if tr != 0 and np.isfinite(tr) and abs(1.0 / tr) < 1e3 * tol * (1.0 + abs(lam)):
                    lam -= 1.0 / tr
            except np.linalg.LinAlgError:
                pass
            return lam, True
    return lam, False


def _dedupe(roots: list[complex]) -> list[complex]:
    out: list[complex] = []
    for r in sorted(roots, key=lambda z: (-z.real, z.imag)):
        if all(abs(r - q) >= 1e-6 * (1.0 + abs(r)) for q in out):
            out.append(r)
    return out


def refine_roots(ret: RetardedSystem, guesses, opts: SpectrumOptions | None = None, ddae: DdaeSystem | None = None):
    """Newton-refine candidate roots; returns ``(roots, residuals, dropped)`` with conjugates mirrored.

    Residuals are measured on ``ddae`` when given, otherwise on the retarded matrix.
    """
    opts = opts or SpectrumOptions()
    found, dropped = [], []
    for g in guesses:
        g = complex(g)
        if g.imag < 0:
            continue
        lam, ok = newton_root(ret, g, opts.newton_tol, opts.newton_max_iter)
        if not ok or not np.isfinite(lam):
            dropped.append(g)
            continue
        if abs(lam.imag) <= 1e-9 * (1.0 + abs(lam)):
            lam = complex(lam.real, 0.0)
        found.append(lam)
    roots = _dedupe([r for r in found if r.imag >= 0])
    full = []
    for r in roots:
        full.append(r)
        if r.imag != 0:
            full.append(r.conjugate())
    resid_fn = (lambda z: char_residual(ddae, z)) if ddae is not None else (lambda z: _backward_error(np.eye(ret.dim), ret.A0, ret.A1, ret.tau, z))
    kept, res = [], []
    for r in full:
        rr = resid_fn(r)
        if rr < opts.residual_tol:
            kept.append(r)
            res.append(rr)
        else:
            dropped.append(r)
    order = sorted(range(len(kept)), key=lambda i: (kept[i].real, kept[i].imag))
    return np.array([kept[i] for i in order], dtype=complex), np.array([res[i] for i in order]), tuple(dropped)


def _candidates(eigs: np.ndarray, bound: float) -> np.ndarray:
    sel = eigs[(eigs.real >= bound) & np.isfinite(eigs)]
    if sel.size == 0:
        # nothing in the window: fall back on the rightmost eigenvalue pair
        finite = eigs[np.isfinite(eigs)]
        sel = finite[np.argsort(-finite.real)[:2]]
    return sel


def _spectrum_at(ret: RetardedSystem, ddae: DdaeSystem | None, N: int, opts: SpectrumOptions) -> Spectrum:
    eigs = np.linalg.eigvals(generator_matrix(ret, N))
    roots, res, dropped = refine_roots(ret, _candidates(eigs, opts.rhp_bound), opts, ddae)
    inside = roots.real >= opts.rhp_bound
    if inside.any():
        roots, res = roots[inside], res[inside]
    if roots.size == 0:
        raise SpectrumError("Newton refinement failed for every candidate root")
    if dropped:
        warnings.warn(f"{len(dropped)} candidate root(s) dropped after failed refinement", RuntimeWarning, stacklevel=3)
    return Spectrum(roots=roots, abscissa=float(roots.real.max()), residuals=res, grid_size=N, dropped=dropped)


def spectrum(ddae: DdaeSystem, options: SpectrumOptions | None = None) -> Spectrum:
    opts = options or SpectrumOptions()
    ret = reduce_to_retarded(ddae)
    if ret.delay_free:
        eigs = np.linalg.eigvals(ret.A0 + ret.A1)
        roots, res, dropped = refine_roots(ret, eigs, opts, ddae)
        if roots.size == 0:
            raise SpectrumError("eigenvalue refinement failed for the delay-free system")
        return Spectrum(roots=roots, abscissa=float(roots.real.max()), residuals=res, grid_size=0, dropped=dropped)

    N = opts.grid_size
    spec = _spectrum_at(ret, ddae, N, opts)
    if not opts.adaptive:
        return spec
    n = ret.dim
    while n * (2 * N + 1) <= opts.max_size:
        N *= 2
        finer = _spectrum_at(ret, ddae, N, opts)
        converged = abs(finer.abscissa - spec.abscissa) < opts.abscissa_tol
        spec = finer
        if converged:
            return spec
    if N == opts.grid_size:
        return spec
    log.warning("spectral abscissa not stabilised to %g at the largest discretisation N=%d", opts.abscissa_tol, N)
    return spec


def spectral_abscissa(ddae: DdaeSystem, options: SpectrumOptions | None = None) -> float:
    return spectrum(ddae, options).abscissa
