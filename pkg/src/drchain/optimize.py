"""Integrated structural/control design.

The resonator gain and delay are not decision variables: they are re-tuned at every
structural parameter vector ``theta``.  The design problem is

    minimise   gamma * max_i W_i,max / W_nom + (1 - gamma) * P_max / P_nom
    subject to A theta <= b,  alpha(theta) <= xi_alpha,  W_a,max(theta) <= xi_a,
               lb <= theta <= ub.

``solve`` runs the penalty BFGS of :mod:`drchain.solver` from seeded uniform starts,
``grid_search`` enumerates a Cartesian grid (the mode for plate-wise mass changes).
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DrChainError, ValidationError
from .model import AbsorberModel, ChainModel, HarmonicExcitation, get_parameter, parameter_ids, with_parameters
from .phasor import active_report
from .solver import SolverOptions, minimize
from .stability import SpectrumOptions, build_ddae, reduce_to_retarded, refine_roots, spectrum
from .tuning import DrFeedback, tune

INFEASIBLE = math.inf

# spectrum used inside the solver loop; results are re-checked with the adaptive default
FAST_SPECTRUM = SpectrumOptions(grid_size=20, adaptive=False)
# line-search trials this close (scaled units) to the last accepted iterate reuse its roots
WARM_RADIUS = 1e-3


@dataclass(frozen=True)
class DesignProblem:
    """Structural design problem around a base configuration.

    ``theta_spec`` lists ``(parameter id, lower, upper)`` for the free parameters; ids are
    those of :func:`drchain.model.parameter_ids`.  When ``W_nom``/``P_nom`` are omitted
    they are computed at ``theta0`` (the base configuration) so that ``J(theta0) = 1``.
    """

    model: ChainModel
    absorber: AbsorberModel
    excitation: HarmonicExcitation
    theta_spec: tuple[tuple[str, float, float], ...]
    gamma: float = 0.5
    xi_alpha: float = -0.2
    xi_a: float = 0.01
    W_nom: float | None = None
    P_nom: float | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    spectrum_options: SpectrumOptions = field(default_factory=SpectrumOptions)

    def __post_init__(self):
        spec = tuple((str(p), float(lo), float(hi)) for p, lo, hi in self.theta_spec)
        object.__setattr__(self, "theta_spec", spec)
        if not spec:
            raise ValidationError("theta_spec must list at least one parameter")
        known = set(parameter_ids(self.model))
        ids = [p for p, _, _ in spec]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate parameter in theta_spec")
        for pid, lo, hi in spec:
            if pid not in known:
                raise ValidationError(f"unknown parameter id {pid!r}")
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo <= hi):
                raise ValidationError(f"bounds of {pid} must be finite, positive and ordered")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if not self.xi_alpha < 0 or not self.xi_a > 0:
            raise ValidationError("need xi_alpha < 0 and xi_a > 0")
        if (self.A is None) != (self.b is None):
            raise ValidationError("A and b must be given together")
        if self.A is not None:
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            b = np.atleast_1d(np.asarray(self.b, dtype=float))
            if A.shape != (b.size, len(spec)):
                raise ValidationError(f"A must have shape ({b.size}, {len(spec)})")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)
        if self.W_nom is None or self.P_nom is None:
            rep = active_report(self.model, self.absorber, self.excitation)
            if self.W_nom is None:
                object.__setattr__(self, "W_nom", float(rep.energy.W_max.max()))
            if self.P_nom is None:
                object.__setattr__(self, "P_nom", float(rep.power.P_max))
        if not (self.W_nom > 0 and self.P_nom > 0):
            raise ValidationError("W_nom and P_nom must be > 0")

    @property
    def ids(self) -> list[str]:
        return [p for p, _, _ in self.theta_spec]

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for _, lo, _ in self.theta_spec])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, _, hi in self.theta_spec])

    @property
    def theta0(self) -> np.ndarray:
        return np.array([get_parameter(self.model, self.absorber, p) for p in self.ids])

    def realize(self, theta) -> tuple[ChainModel, AbsorberModel]:
        return with_parameters(self.model, self.absorber, dict(zip(self.ids, map(float, theta))))

    def linear_residuals(self, theta) -> np.ndarray:
        if self.A is None:
            return np.zeros(0)
        return self.A @ np.asarray(theta, dtype=float) - self.b


@dataclass(frozen=True)
class Evaluation:
    """Everything computed at one ``theta``; ``J = inf`` marks an infeasible evaluation."""

    theta: np.ndarray
    J: float
    W_max: float
    P_max: float
    alpha: float
    W_a: float
    feedback: DrFeedback | None
    linear: np.ndarray
    roots: np.ndarray
    alpha_slack: float
    wa_slack: float
    error: str | None = None

    @property
    def slacks(self) -> tuple[np.ndarray, float, float]:
        """``(A theta - b, alpha - xi_alpha, W_a - xi_a)``; all <= 0 when feasible."""
        return self.linear, self.alpha_slack, self.wa_slack

    def feasible(self, tol: float = 1e-8) -> bool:
        if not np.isfinite(self.J):
            return False
        lin, sa, sw = self.slacks
        return bool(np.all(lin <= tol) and sa <= tol and sw <= tol)


def _failed(problem: DesignProblem, theta, msg: str) -> Evaluation:
    return Evaluation(
        theta=np.asarray(theta, float), J=INFEASIBLE, W_max=math.nan, P_max=math.nan, alpha=math.nan,
        W_a=math.nan, feedback=None, linear=problem.linear_residuals(theta), roots=np.zeros(0, complex),
        alpha_slack=math.inf, wa_slack=math.inf, error=msg,
    )


def evaluate(problem: DesignProblem, theta, spectrum_options: SpectrumOptions | None = None,
             warm_roots: np.ndarray | None = None) -> Evaluation:
    """Retune the resonator at ``theta`` and evaluate objective terms and constraints.

    With ``warm_roots`` the abscissa comes from Newton refinement of those roots
    (used for finite-difference probes next to an already analysed point).
    """
    theta = np.asarray(theta, dtype=float)
    try:
        model, absorber = problem.realize(theta)
        rep = active_report(model, absorber, problem.excitation)
        fb = tune(model, absorber, problem.excitation).selected
        ddae = build_ddae(model, absorber, fb)
        if warm_roots is not None and warm_roots.size:
            opts = spectrum_options or problem.spectrum_options
            roots, _, _ = refine_roots(reduce_to_retarded(ddae), warm_roots, opts)
            if not roots.size:
                raise DrChainError("warm-started refinement lost every root")
        else:
            roots = spectrum(ddae, spectrum_options or problem.spectrum_options).roots
    except (DrChainError, ValueError, ArithmeticError, np.linalg.LinAlgError) as err:
        return _failed(problem, theta, f"{type(err).__name__}: {err}")
    W_max = float(rep.energy.W_max.max())
    P_max = float(rep.power.P_max)
    W_a = float(rep.energy.absorber[2])
    alpha = float(roots.real.max())
    J = problem.gamma * W_max / problem.W_nom + (1.0 - problem.gamma) * P_max / problem.P_nom
    return Evaluation(
        theta=theta, J=J, W_max=W_max, P_max=P_max, alpha=alpha, W_a=W_a, feedback=fb,
        linear=problem.linear_residuals(theta), roots=roots,
        alpha_slack=alpha - problem.xi_alpha, wa_slack=W_a - problem.xi_a,
    )


def objective(problem: DesignProblem, theta) -> tuple[float, float, float]:
    """``(J, max_i W_i,max, P_max)``; ``J`` is ``inf`` when the resonator cannot be tuned."""
    theta = np.asarray(theta, dtype=float)
    try:
        model, absorber = problem.realize(theta)
        rep = active_report(model, absorber, problem.excitation)
        tune(model, absorber, problem.excitation)
    except (DrChainError, ValueError, ArithmeticError):
        return INFEASIBLE, math.nan, math.nan
    W_max, P_max = float(rep.energy.W_max.max()), float(rep.power.P_max)
    return problem.gamma * W_max / problem.W_nom + (1.0 - problem.gamma) * P_max / problem.P_nom, W_max, P_max


def constraints(problem: DesignProblem, theta) -> tuple[np.ndarray, float, float]:
    """``(A theta - b, alpha - xi_alpha, W_a,max - xi_a)``; ``inf`` slacks on failure."""
    return evaluate(problem, theta).slacks


@dataclass
class DesignResult:
    success: bool
    theta_star: dict[str, float] | None
    objective: float
    W_max_term: float
    P_max_term: float
    W_max: float
    P_max: float
    alpha: float
    W_a: float
    feedback: DrFeedback | None
    slacks: dict[str, object]
    start_index: int | None
    log: list[dict]
    message: str = ""

    def to_dict(self) -> dict:
        fb = None
        if self.feedback is not None:
            fb = {"g": self.feedback.g, "tau": self.feedback.tau,
                  "branch": self.feedback.branch.value if self.feedback.branch else None, "k": self.feedback.k}
        return {
            "success": self.success, "message": self.message, "theta_star": self.theta_star,
            "objective": self.objective, "W_max_term": self.W_max_term, "P_max_term": self.P_max_term,
            "W_max": self.W_max, "P_max": self.P_max, "alpha": self.alpha, "W_a": self.W_a,
            "feedback": fb, "slacks": self.slacks, "start_index": self.start_index,
        }

    def write_log(self, path) -> None:
        """Per-start log as JSON lines."""
        with open(path, "w") as fh:
            for row in self.log:
                fh.write(json.dumps(row) + "\n")


def _result(problem: DesignProblem, ev: Evaluation, start: int | None, log: list[dict], msg: str = "") -> DesignResult:
    lin, sa, sw = ev.slacks
    return DesignResult(
        success=True, theta_star=dict(zip(problem.ids, map(float, ev.theta))), objective=float(ev.J),
        W_max_term=problem.gamma * ev.W_max / problem.W_nom,
        P_max_term=(1.0 - problem.gamma) * ev.P_max / problem.P_nom,
        W_max=ev.W_max, P_max=ev.P_max, alpha=ev.alpha, W_a=ev.W_a, feedback=ev.feedback,
        slacks={"linear": [float(v) for v in lin], "alpha": float(sa), "W_a": float(sw)},
        start_index=start, log=log, message=msg,
    )


def _failure(log: list[dict], msg: str) -> DesignResult:
    return DesignResult(False, None, INFEASIBLE, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan,
                        None, {}, None, log, msg)


class _ScaledProblem:
    """Solver view on ``x in [0, 1]^n`` with scaled constraints and cached evaluations."""

    def __init__(self, problem: DesignProblem, spectrum_options: SpectrumOptions):
        self.p = problem
        self.opts = spectrum_options
        self.lo, self.span = problem.lower, problem.upper - problem.lower
        self.span = np.where(self.span > 0, self.span, 1.0)
        self.lin_scale = np.maximum(1.0, np.abs(problem.b)) if problem.b is not None else np.zeros(0)
        self.cache: dict[bytes, Evaluation] = {}
        self.n_eval = 0
        self.anchor: tuple[np.ndarray, np.ndarray] | None = None

    def theta(self, x) -> np.ndarray:
        return self.lo + np.asarray(x) * self.span

    def _scaled(self, ev: Evaluation) -> tuple[float, np.ndarray]:
        if not np.isfinite(ev.J):
            return INFEASIBLE, np.full(self.lin_scale.size + 2, INFEASIBLE)
        lin, sa, sw = ev.slacks
        c = np.concatenate([lin / self.lin_scale, [sa / abs(self.p.xi_alpha), sw / self.p.xi_a]])
        return float(ev.J), c

    def eval(self, x, warm=None) -> Evaluation:
        key = np.asarray(x, float).tobytes() + (b"w" if warm is not None else b"")
        if key not in self.cache:
            self.n_eval += 1
            self.cache[key] = evaluate(self.p, self.theta(x), self.opts, warm)
        return self.cache[key]

    def fun(self, x) -> tuple[float, np.ndarray]:
        warm = None
        if self.anchor is not None and np.max(np.abs(x - self.anchor[0])) <= WARM_RADIUS:
            warm = self.anchor[1]
        return self._scaled(self.eval(x, warm))

    def jac(self, x, f, c) -> tuple[np.ndarray, np.ndarray]:
        base = self.eval(x)  # full spectrum at every accepted iterate
        self.anchor = (np.array(x, float), base.roots)
        theta = self.theta(x)
        n = x.size
        gf = np.zeros(n)
        Jc = np.zeros((c.size, n))
        for j in range(n):
            h = 1e-8 * (1.0 + abs(theta[j])) / self.span[j]
            step = h if x[j] + h <= 1.0 else -h
            xp = x.copy()
            xp[j] += step
            fp, cp = self._scaled(self.eval(xp, warm=base.roots))
            if not np.isfinite(fp):
                continue
            gf[j] = (fp - f) / step
            Jc[:, j] = (cp - c) / step
        return gf, Jc


def _run_start(problem: DesignProblem, index: int, theta0: np.ndarray,
               solver_options: SolverOptions | None) -> tuple[dict, Evaluation]:
    scaled = _ScaledProblem(problem, FAST_SPECTRUM)
    x0 = np.clip((theta0 - scaled.lo) / scaled.span, 0.0, 1.0)
    res = minimize(scaled.fun, scaled.jac, x0, np.zeros(x0.size), np.ones(x0.size), solver_options)
    # fresh evaluation with the adaptive spectrum
    ev = evaluate(problem, scaled.theta(res.x))
    row = {
        "start": index, "theta0": [float(v) for v in theta0], "theta": [float(v) for v in ev.theta],
        "J": float(ev.J), "alpha": float(ev.alpha), "W_a": float(ev.W_a), "feasible": ev.feasible(),
        "slacks": {"linear": [float(v) for v in ev.linear], "alpha": float(ev.alpha_slack), "W_a": float(ev.wa_slack)},
        "status": res.status, "iterations": res.iterations, "evaluations": scaled.n_eval,
        "mu": res.mu, "history": res.history,
    }
    return row, ev


def solve(problem: DesignProblem, starts: int = 100, seed: int = 0,
          solver_options: SolverOptions | None = None, initial_points=None, workers: int = 1) -> DesignResult:
    """Multi-start solve; returns the best feasible result (ties go to the lower start index).

    ``initial_points`` (array of theta rows) replaces the random starts when given.
    With ``workers > 1`` the starts run in separate processes; the result does not
    depend on the number of workers.
    """
    if initial_points is not None:
        pts = np.atleast_2d(np.asarray(initial_points, dtype=float))
    else:
        if starts < 1:
            raise ValidationError("starts must be >= 1")
        rng = np.random.default_rng(seed)
        pts = problem.lower + rng.uniform(size=(starts, len(problem.ids))) * (problem.upper - problem.lower)
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    args = [(problem, i, th, solver_options) for i, th in enumerate(pts)]
    if workers == 1:
        outcomes = [_run_start(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_start, *zip(*args)))
    log, best = [], None
    for i, (row, ev) in enumerate(outcomes):
        log.append(row)
        if row["feasible"] and (best is None or ev.J < best[1].J):
            best = (i, ev)
    if best is None:
        return _failure(log, "no start reached a feasible point")
    return _result(problem, best[1], best[0], log)


@dataclass
class GridResult:
    result: DesignResult
    axes: dict[str, np.ndarray]
    J: np.ndarray
    W_max: np.ndarray
    P_max: np.ndarray
    alpha: np.ndarray
    W_a: np.ndarray
    feasible: np.ndarray

    def rows(self):
        """Flat ``(theta..., J, W_max, P_max, alpha, W_a, feasible)`` records for export."""
        names = list(self.axes)
        for idx in itertools.product(*(range(a.size) for a in self.axes.values())):
            rec = {n: float(self.axes[n][i]) for n, i in zip(names, idx)}
            rec.update(J=float(self.J[idx]), W_max=float(self.W_max[idx]), P_max=float(self.P_max[idx]),
                       alpha=float(self.alpha[idx]), W_a=float(self.W_a[idx]), feasible=bool(self.feasible[idx]))
            yield rec


def grid_axes(problem: DesignProblem, steps: dict[str, float]) -> dict[str, np.ndarray]:
    axes = {}
    for pid, lo, hi in problem.theta_spec:
        if pid not in steps:
            raise ValidationError(f"grid step missing for {pid}")
        h = float(steps[pid])
        if not h > 0:
            raise ValidationError("grid steps must be > 0")
        n = int(math.floor((hi - lo) / h + 1e-9)) + 1
        axes[pid] = np.round(lo + h * np.arange(n), 12)
    return axes


def grid_search(problem: DesignProblem, grid_spec: dict[str, float]) -> GridResult:
    """Evaluate every point of the Cartesian grid (at most three free parameters).

    ``grid_spec`` maps each parameter id to its step; the grid starts at the lower bound.
    Points are screened with the fast spectrum; feasible points are then re-checked with
    the adaptive spectrum in order of increasing ``J`` until one is confirmed.
    """
    if len(problem.ids) > 3:
        raise ValidationError("grid_search supports at most three free parameters")
    axes = grid_axes(problem, grid_spec)
    shape = tuple(a.size for a in axes.values())
    maps = {k: np.full(shape, np.nan) for k in ("J", "W_max", "P_max", "alpha", "W_a")}
    feas = np.zeros(shape, dtype=bool)

    def store(idx, ev):
        for k in maps:
            maps[k][idx] = getattr(ev, k)
        feas[idx] = ev.feasible()

    points = {}
    for idx in itertools.product(*(range(n) for n in shape)):
        points[idx] = np.array([axes[p][i] for p, i in zip(problem.ids, idx)])
        store(idx, evaluate(problem, points[idx], FAST_SPECTRUM))
    best = None
    for idx in sorted(zip(*np.nonzero(feas)), key=lambda i: (maps["J"][i], i)):
        idx = tuple(int(i) for i in idx)
        ev = evaluate(problem, points[idx])
        store(idx, ev)
        if feas[idx]:
            best = ev
            break
    if best is None:
        res = _failure([], "no feasible grid point")
    else:
        res = _result(problem, best, None, [])
    return GridResult(result=res, axes=axes, feasible=feas, **maps)
