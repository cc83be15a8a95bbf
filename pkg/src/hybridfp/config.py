"""JSON run configurations: schema validation and instance construction.

A configuration names either a built-in problem or an inline instance
assembled from a small catalog (affine and scaled-duality operators,
operator-form bifunctions, identity and truncated-shift map families),
plus algorithm parameters, solver settings and output file names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .hybrid import AlgorithmParams, constant_rule
from .problems import (
    ProblemInstance,
    affine_operator,
    builtin_problem,
    duality_operator,
    identity_family,
    inverse_duality_bifunction,
    shift_family,
)
from .sets import Ball, Box
from .solvers import SolverSettings
from .space import hilbert, lp


class ConfigError(ValueError):
    """The configuration is unreadable, violates the schema or is inconsistent."""


def schema() -> dict:
    text = resources.files("hybridfp").joinpath("config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    instance: ProblemInstance
    params: AlgorithmParams
    settings: SolverSettings
    outputs: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)


def _vec(values, dim, what):
    v = np.asarray(values, dtype=float)
    if v.shape != (dim,):
        raise ConfigError(f"{what} must have {dim} entries, got {v.size}")
    return v


def _inline_instance(desc):
    sp = desc["space"]
    dim = sp["dim"]
    if sp["kind"] == "hilbert":
        if "p" in sp:
            raise ConfigError("a Hilbert space takes no exponent p")
        space = hilbert(dim)
    else:
        if "p" not in sp:
            raise ConfigError("an lp space needs an exponent p")
        space = lp(dim, sp["p"])

    fs = desc["feasible_set"]
    if "ball" in fs:
        center = _vec(fs["ball"].get("center", [0.0] * dim), dim, "ball center")
        C = Ball(space, center, fs["ball"]["radius"])
    else:
        lower = _vec(fs["box"]["lower"], dim, "box lower")
        upper = _vec(fs["box"]["upper"], dim, "box upper")
        C = Box(lower, upper)

    operators = []
    for k, op in enumerate(desc.get("operators", [])):
        if op["type"] == "affine":
            M = np.asarray(op["matrix"], dtype=float)
            if M.shape != (dim, dim):
                raise ConfigError(f"operators[{k}].matrix must be {dim}x{dim}")
            c = _vec(op.get("offset", [0.0] * dim), dim, f"operators[{k}].offset")
            operators.append(affine_operator(space, M, c))
        else:
            operators.append(duality_operator(space, op.get("scale", 1.0)))

    bifunctions = [inverse_duality_bifunction(space, bf.get("scale", 1.0)) for bf in desc.get("bifunctions", [])]

    maps_desc = desc.get("maps", {"type": "identity"})
    if maps_desc["type"] == "identity":
        maps = identity_family(space)
    else:
        k = float(maps_desc.get("alpha_offset", 2.0))
        maps = shift_family(space, lambda n: 1.0 / (n + k))

    known = [_vec(u, dim, "known solution") for u in desc.get("known_solutions", [])]
    return ProblemInstance(
        space=space,
        C=C,
        operators=tuple(operators),
        bifunctions=tuple(bifunctions),
        maps=maps,
        known_common_solutions=tuple(known),
        name=desc.get("name", "inline"),
    )


def build_instance(problem: dict) -> ProblemInstance:
    if "builtin" in problem:
        params = {k: v for k, v in problem.items() if k != "builtin"}
        return builtin_problem(problem["builtin"], **params)
    return _inline_instance(problem)


def default_anchor(instance: ProblemInstance) -> np.ndarray:
    """Halfway from the centre of C towards its boundary along the first axis."""
    C = instance.C
    x = C.interior_point().copy()
    if isinstance(C, Ball):
        x[0] += 0.5 * C.radius
    else:
        x[0] += 0.25 * (C.upper[0] - C.lower[0])
    return x


def parse_config(data: dict, seed: int | None = None) -> RunConfig:
    """Validate ``data`` against the schema and build the run objects.

    ``seed`` overrides ``settings.rng_seed``. Every failure is reported as a
    :class:`ConfigError`.
    """
    exc = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema()).iter_errors(data))
    if exc is not None:
        # descend into oneOf branches to the most specific complaint
        while exc.context:
            exc = jsonschema.exceptions.best_match(exc.context)
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}")
    try:
        instance = build_instance(data["problem"])
        p = dict(data.get("params", {}))
        anchor = np.asarray(p.pop("anchor"), dtype=float) if "anchor" in p else default_anchor(instance)
        r = p.pop("r", 1.0)
        p.setdefault("a", min(1.0, r))
        params = AlgorithmParams(anchor=anchor, r_rule=constant_rule(r), **p)
        params.validate_for(instance)
        s = dict(data.get("settings", {}))
        if seed is not None:
            s["rng_seed"] = seed
        settings = SolverSettings(**s)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from None
    outputs = {"trace": "trace.csv", "summary": "summary.json", "plot": None}
    outputs.update(data.get("outputs", {}))
    return RunConfig(instance, params, settings, outputs, data)


def load_config(path, seed: int | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(data, seed)


SETTINGS_KEYS = tuple(f.name for f in fields(SolverSettings))
