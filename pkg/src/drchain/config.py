"""Experiment configuration: strict JSON schema, overrides and conversion to model objects."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ValidationError
from .model import AbsorberModel, ChainModel, HarmonicExcitation
from .optimize import DesignProblem
from .simulation import SimulationConfig
from .solver import SolverOptions
from .stability import SpectrumOptions
from .tuning import Branch, BranchPolicy, DrFeedback

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


def _opts(cls) -> dict:
    types = {int: {"type": "integer"}, float: _num, bool: {"type": "boolean"}}
    props = {}
    for f in fields(cls):
        default = f.default
        props[f.name] = types.get(type(default), _num)
    return _obj(props)


SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "model": _obj(
            {"masses": _vec, "stiffnesses": _vec, "dampings": _vec, "p": {"type": "integer"}, "s": {"type": "integer"}},
            required=("masses", "stiffnesses", "dampings", "p", "s"),
        ),
        "absorber": _obj({"m_a": _num, "c_a": _num, "k_a": _num}, required=("m_a", "c_a", "k_a")),
        "excitation": _obj({"amplitude": _num, "omega": _num}, required=("amplitude", "omega")),
        "tuning": _obj({"branch": {"enum": ["plus", "minus", None]}, "k": {"type": ["integer", "null"]}}),
        "feedback": _obj({"g": _num, "tau": _num}, required=("g", "tau")),
        "spectrum": _opts(SpectrumOptions),
        "simulation": _obj({
            "t_end": _pos, "dt": {"type": ["number", "null"]}, "switch_time": _num,
            "initial_state": {"type": ["array", "null"], "items": _num},
        }),
        "design": _obj(
            {
                "mode": {"enum": ["solve", "grid"]},
                "theta": {
                    "type": "array", "minItems": 1,
                    "items": _obj({"id": {"type": "string"}, "lower": _num, "upper": _num}, required=("id", "lower", "upper")),
                },
                "gamma": _num, "xi_alpha": _num, "xi_a": _num,
                "W_nom": {"type": ["number", "null"]}, "P_nom": {"type": ["number", "null"]},
                "A": {"type": "array", "items": _vec}, "b": _vec,
                "starts": {"type": "integer"}, "seed": {"type": "integer"}, "workers": {"type": "integer"},
                "grid_steps": {"type": "object", "additionalProperties": _num},
                "solver": _opts(SolverOptions),
            },
            required=("theta",),
        ),
    },
    required=("schema_version", "model", "absorber", "excitation"),
)


def fixture_names() -> list[str]:
    root = resources.files("drchain") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_path(name: str) -> Path:
    """Path of a bundled configuration (``five_mass_nominal``, ``experimental_optimized``, ...)."""
    path = Path(str(resources.files("drchain") / "fixtures" / f"{name}.json"))
    if not path.is_file():
        raise ValidationError(f"unknown fixture {name!r}; available: {', '.join(fixture_names())}")
    return path


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, item: str) -> dict:
    """Set a dotted path (``model.masses.2=0.705``); values are parsed as JSON when possible."""
    if "=" not in item:
        raise ValidationError(f"override {item!r} must look like key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    out = copy.deepcopy(raw)
    node = out
    for i, part in enumerate(parts):
        last = i == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError):
                raise ValidationError(f"override {key!r}: bad list index {part!r}") from None
            if last:
                node[idx] = _parse_value(value)
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[part] = _parse_value(value)
            else:
                node = node.setdefault(part, {})
        else:
            raise ValidationError(f"override {key!r}: {'.'.join(parts[:i])} is not a container")
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    model: ChainModel
    absorber: AbsorberModel
    excitation: HarmonicExcitation
    branch_policy: BranchPolicy
    feedback: DrFeedback | None
    spectrum: SpectrumOptions
    simulation: SimulationConfig
    design: DesignProblem | None
    design_mode: str
    starts: int
    seed: int
    workers: int
    grid_steps: dict[str, float]
    solver: SolverOptions


def _section(raw: dict, name: str, build):
    try:
        return build(raw.get(name, {}))
    except (ValidationError, ValueError, TypeError) as err:
        raise ValidationError(f"{name}: {err}") from None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate ``raw`` against the schema and every module invariant."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as err:
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ValidationError(f"config {where}: {err.message}") from None

    model = _section(raw, "model", lambda m: ChainModel(**m))
    absorber = _section(raw, "absorber", lambda a: AbsorberModel(**a))
    excitation = _section(raw, "excitation", lambda e: HarmonicExcitation(**e))

    def policy(t):
        br = t.get("branch")
        return BranchPolicy(branch=Branch(br) if br else None, k=t.get("k"))

    branch_policy = _section(raw, "tuning", policy)
    feedback = _section(raw, "feedback", lambda f: DrFeedback(**f)) if "feedback" in raw else None
    spec_opts = _section(raw, "spectrum", lambda s: SpectrumOptions(**s))
    sim = _section(raw, "simulation", lambda s: SimulationConfig(excitation=excitation, **{
        k: (np.asarray(v, dtype=float) if k == "initial_state" and v is not None else v) for k, v in s.items()
    }))

    d = raw.get("design")
    design, mode, starts, seed, workers, steps, solver = None, "solve", 100, 0, 1, {}, SolverOptions()
    if d is not None:
        mode = d.get("mode", "solve")
        starts, seed = d.get("starts", 100), d.get("seed", 0)
        if starts < 1:
            raise ValidationError("design.starts must be >= 1")
        workers = d.get("workers", 1)
        if workers < 1:
            raise ValidationError("design.workers must be >= 1")
        steps = dict(d.get("grid_steps", {}))
        solver = _section(d, "solver", lambda s: SolverOptions(**s))

        def problem(dd):
            kw = {k: dd[k] for k in ("gamma", "xi_alpha", "xi_a", "W_nom", "P_nom", "A", "b") if k in dd}
            return DesignProblem(
                model=model, absorber=absorber, excitation=excitation, spectrum_options=spec_opts,
                theta_spec=tuple((t["id"], t["lower"], t["upper"]) for t in dd["theta"]), **kw,
            )

        design = _section(raw, "design", problem)
        if mode == "grid":
            missing = [p for p in design.ids if p not in steps]
            if missing:
                raise ValidationError(f"design.grid_steps missing {missing}")
    return ExperimentConfig(
        raw=raw, model=model, absorber=absorber, excitation=excitation, branch_policy=branch_policy,
        feedback=feedback, spectrum=spec_opts, simulation=sim, design=design, design_mode=mode,
        starts=starts, seed=seed, workers=workers, grid_steps=steps, solver=solver,
    )


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ValidationError(f"config {path} is not valid JSON: {err}") from None
    for item in overrides:
        raw = apply_override(raw, item)
    return parse_config(raw)


def with_theta(raw: dict, values: dict[str, float]) -> dict:
    """Copy of ``raw`` with structural/absorber parameters replaced (design block dropped)."""
    out = copy.deepcopy(raw)
    out.pop("design", None)
    out.pop("feedback", None)
    listed = {"m": "masses", "k": "stiffnesses", "c": "dampings"}
    for pid, v in values.items():
        if pid in ("m_a", "c_a", "k_a"):
            out["absorber"][pid] = float(v)
        else:
            kind, idx = pid.split("_")
            key = listed[kind]
            seq = list(out["model"][key])
            seq[int(idx) - 1] = float(v)
            out["model"][key] = seq
    return out
