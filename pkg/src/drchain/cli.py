"""Command-line entry point: ``drchain analyze|tune|spectrum|simulate|optimize``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.  ``DRCHAIN_LOG_LEVEL``
sets the logging verbosity.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, ExperimentConfig, fixture_path, load_config, with_theta
from .errors import DrChainError, NumericalError, ValidationError
from .optimize import grid_search, solve
from .phasor import active_report, passive_steady_state
from .simulation import active_kernel, simulate
from .stability import build_ddae, spectrum
from .tuning import DrFeedback, tune

log = logging.getLogger("drchain")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _cplx(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z)), "abs": float(abs(z))}


def _fb(fb: DrFeedback) -> dict:
    return {"g_N_per_m": fb.g, "tau_s": fb.tau, "branch": fb.branch.value if fb.branch else None, "k": fb.k}


def _parameters(raw: dict) -> dict:
    return {k: raw[k] for k in ("model", "absorber", "excitation")}


def _feedback(cfg: ExperimentConfig) -> DrFeedback:
    if cfg.feedback is not None:
        return cfg.feedback
    return tune(cfg.model, cfg.absorber, cfg.excitation, cfg.branch_policy).selected


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def cmd_analyze(cfg: ExperimentConfig, out: Path) -> dict:
    ts = tune(cfg.model, cfg.absorber, cfg.excitation, cfg.branch_policy)
    rep = active_report(cfg.model, cfg.absorber, cfg.excitation)
    sp = spectrum(build_ddae(cfg.model, cfg.absorber, ts.selected), cfg.spectrum)
    pas = passive_steady_state(cfg.model, cfg.absorber, cfg.excitation)
    link, w_max = rep.energy.max_link
    report = {
        "schema_version": SCHEMA_VERSION,
        "parameters": _parameters(cfg.raw),
        "feedback": _fb(ts.selected),
        "Q_N_per_m": _cplx(ts.q),
        "f_a_N": _cplx(rep.stage.f_a),
        "u_N": _cplx(rep.stage.u),
        "links": [{"link": i + 1, "W_max_J": float(r[2]), "W_mean_J": float(r[0])} for i, r in enumerate(rep.energy.links)],
        "W_max_J": w_max,
        "max_link": link,
        "W_a_max_J": float(rep.energy.absorber[2]),
        "P_max_W": float(rep.power.P_max),
        "p_mean_W": float(rep.power.p_mean),
        "alpha_1_per_s": sp.abscissa,
        "passive": {
            "x_amplitude_m": [float(abs(v)) for v in pas.x],
            "x_a_amplitude_m": float(abs(pas.x_a)),
            "W_max_J": [float(v) for v in pas.energy.W_max],
            "W_a_max_J": float(pas.energy.absorber[2]),
        },
    }
    _write_json(out / "analysis.json", report)
    return report


def cmd_tune(cfg: ExperimentConfig, out: Path) -> dict:
    ts = tune(cfg.model, cfg.absorber, cfg.excitation, cfg.branch_policy)
    report = {
        "schema_version": SCHEMA_VERSION,
        "omega_rad_per_s": ts.omega,
        "Q_N_per_m": _cplx(ts.q),
        "candidates": [_fb(c) for c in ts.candidates],
        "selected": _fb(ts.selected),
    }
    _write_json(out / "tuning.json", report)
    return report


def cmd_spectrum(cfg: ExperimentConfig, out: Path) -> dict:
    fb = _feedback(cfg)
    sp = spectrum(build_ddae(cfg.model, cfg.absorber, fb), cfg.spectrum)
    with open(out / "spectrum.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re[1/s]", "im[rad/s]", "residual[-]"])
        for lam, r in zip(sp.roots, sp.residuals):
            w.writerow([lam.real, lam.imag, r])
    report = {
        "schema_version": SCHEMA_VERSION,
        "feedback": _fb(fb),
        "alpha_1_per_s": sp.abscissa,
        "roots": len(sp.roots),
        "grid_size": sp.grid_size,
        "max_residual": float(sp.residuals.max()) if sp.residuals.size else None,
    }
    _write_json(out / "spectrum.json", report)
    return report


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    fb = _feedback(cfg)
    traj = simulate(cfg.model, cfg.absorber, fb, cfg.simulation)
    traj.to_csv(out / "trajectory.csv")
    report = {
        "schema_version": SCHEMA_VERSION,
        "feedback": _fb(fb),
        "kernel": active_kernel(),
        "dt_s": float(traj.t[1] - traj.t[0]) if traj.t.size > 1 else None,
        "steps": int(traj.t.size - 1),
        "switch_time_s": cfg.simulation.switch_time,
        "t_end_s": float(traj.t[-1]),
    }
    _write_json(out / "simulation.json", report)
    return report


def cmd_optimize(cfg: ExperimentConfig, out: Path) -> dict:
    if cfg.design is None:
        raise ValidationError("config has no design block")
    if cfg.design_mode == "grid":
        grid = grid_search(cfg.design, cfg.grid_steps)
        result = grid.result
        rows = list(grid.rows())
        with open(out / "grid.csv", "w", newline="") as fh:
            names = list(grid.axes)
            w = csv.writer(fh)
            w.writerow(names + ["J[-]", "W_max[J]", "P_max[W]", "alpha[1/s]", "W_a[J]", "feasible"])
            for r in rows:
                w.writerow([r[n] for n in names] + [r["J"], r["W_max"], r["P_max"], r["alpha"], r["W_a"], int(r["feasible"])])
    else:
        result = solve(cfg.design, starts=cfg.starts, seed=cfg.seed, solver_options=cfg.solver,
                       workers=cfg.workers)
        result.write_log(out / "optimize_log.jsonl")
    report = {"schema_version": SCHEMA_VERSION, "mode": cfg.design_mode, **result.to_dict()}
    _write_json(out / "optimize.json", report)
    if result.success:
        _write_json(out / "optimized_config.json", with_theta(cfg.raw, result.theta_star))
    else:
        log.warning("optimization found no feasible point: %s", result.message)
    return report


COMMANDS = {
    "analyze": cmd_analyze,
    "tune": cmd_tune,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drchain", description="Delayed-resonator design for serial mass chains.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment config (or bundled fixture name)")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, default=None, help="seed for optimizer starts")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path config override, repeatable")
    return parser


def _resolve_config(name: str) -> Path:
    path = Path(name)
    if path.is_file():
        return path
    return fixture_path(name)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DRCHAIN_LOG_LEVEL", "WARNING").upper(), format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(_resolve_config(args.config), args.override)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = COMMANDS[args.command](cfg, out)
    except ValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, DrChainError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(report, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
