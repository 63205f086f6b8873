"""Run configuration: JSON schema, validation with aggregated errors, hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

FORM_FACTOR_SCHEMA = {
    "type": "object",
    "properties": {
        "template": {"const": "power-exp"},
        "p": {"type": "number", "exclusiveMinimum": 2},
        "cutoff": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": {"type": "number"},
        "uv_exponent": {"type": "number", "exclusiveMinimum": 3},
    },
    "required": ["p", "cutoff"],
    "additionalProperties": False,
}

COUPLING_SCHEMA = {
    "type": "object",
    "properties": {
        "template": {"const": "dipole-like"},
        "strength": {"type": "number"},
        "decouple_modes": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "zero_discrete_block": {"type": "boolean"},
        "matrix": {"type": "array", "items": {"type": "array", "items": {
            "type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}},
        "form_factor": FORM_FACTOR_SCHEMA,
    },
    "required": ["form_factor"],
    "oneOf": [{"required": ["template"]}, {"required": ["matrix"]}],
    "additionalProperties": False,
}

LADDER = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "llab run configuration",
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "atom": {
            "type": "object",
            "properties": {
                "discrete_levels": {"type": "array", "minItems": 1, "items": {
                    "type": "array", "prefixItems": [{"type": "number"}, {"type": "integer", "minimum": 1}],
                    "minItems": 2, "maxItems": 2}},
                "continuum": {
                    "type": "object",
                    "properties": {
                        "e_min": {"type": "number", "exclusiveMinimum": 0},
                        "e_max": {"type": "number", "exclusiveMinimum": 0},
                        "n_points": {"type": "integer", "minimum": 0},
                        "scheme": {"enum": ["gauss-legendre", "uniform"]},
                    },
                    "required": ["e_min", "e_max", "n_points"],
                    "additionalProperties": False,
                },
            },
            "required": ["discrete_levels", "continuum"],
            "additionalProperties": False,
        },
        "window": {
            "type": "object",
            "properties": {
                "coupled_discrete": {"oneOf": [{"const": "all"},
                                               {"type": "array", "items": {"type": "integer", "minimum": 0}}]},
                "r": {"type": "number", "exclusiveMinimum": 0},
                "R": {"type": "number", "exclusiveMinimum": 0},
                "smoothing_margin": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["coupled_discrete", "r", "R", "smoothing_margin"],
            "additionalProperties": False,
        },
        "field": {
            "type": "object",
            "properties": {
                "u_max": {"type": "number", "exclusiveMinimum": 0},
                "n_u": {"type": "integer", "minimum": 1},
                "n_max": {"type": "integer", "minimum": 1, "maximum": 4},
            },
            "required": ["u_max", "n_u", "n_max"],
            "additionalProperties": False,
        },
        "couplings": {"type": "array", "minItems": 1, "items": COUPLING_SCHEMA},
        "params": {
            "type": "object",
            "properties": {
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "lambda": {"type": "number"},
                "lambda_ladder": LADDER,
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "eps_ladder": LADDER,
                "beta_ladder": LADDER,
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "delta_width": {"type": "number", "exclusiveMinimum": 0},
                "zero_tol": {"type": "number", "exclusiveMinimum": 0},
                "fgr_weighting": {"enum": ["p_c", "mu2"]},
                "angular_factor": {"type": "number", "exclusiveMinimum": 0},
                "certificate_tol": {"type": "number", "minimum": 0, "maximum": 1},
                "bridge_tol": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "required": ["beta", "lambda", "eps", "theta", "delta_width"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "outputs": {"type": "string"},
    },
    "required": ["atom", "window", "field", "couplings", "params"],
    "additionalProperties": False,
}

DEFAULT_PARAMS = {
    "zero_tol": 1e-10,
    "fgr_weighting": "p_c",
    "certificate_tol": 0.25,
    "bridge_tol": 0.15,
}


class ConfigError(ValueError):
    """Configuration failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @property
    def params(self) -> dict:
        out = dict(DEFAULT_PARAMS)
        out.update(self.raw["params"])
        return out

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def name(self) -> str:
        return self.raw.get("name", "unnamed")

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def with_params(self, **updates) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw["params"].update(updates)
        return RunConfig(raw)

    def with_field(self, **updates) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw["field"].update(updates)
        return RunConfig(raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def schema_errors(raw) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errs]


def semantic_errors(raw: dict) -> list[str]:
    """Cross-field checks the schema cannot express."""
    errors = []
    atom, window, params = raw["atom"], raw["window"], raw["params"]
    levels = atom["discrete_levels"]
    energies = [lv[0] for lv in levels]
    for k, e in enumerate(energies):
        if e >= 0:
            errors.append(f"atom/discrete_levels/{k}: energy {e} must be negative")
        if k and e <= energies[k - 1]:
            errors.append(f"atom/discrete_levels/{k}: energy {e} not above previous level {energies[k - 1]}")
    cont = atom["continuum"]
    if cont["n_points"] and not cont["e_min"] < cont["e_max"]:
        errors.append(f"atom/continuum: e_min {cont['e_min']} must be below e_max {cont['e_max']}")
    if cont.get("scheme") == "uniform" and cont["n_points"] == 1:
        errors.append("atom/continuum: uniform scheme needs at least 2 points")
    r, R, margin = window["r"], window["R"], window["smoothing_margin"]
    if not r < R:
        errors.append(f"window: r={r} must be below R={R}")
    if cont["n_points"] and not R < cont["e_max"]:
        errors.append(f"window: R={R} must lie below e_max={cont['e_max']}")
    if margin >= r:
        errors.append(f"window: smoothing_margin {margin} >= r {r} would reach zero energy")
    n_discrete_modes = sum(lv[1] for lv in levels)
    d_tot = n_discrete_modes + cont["n_points"]
    coupled = window["coupled_discrete"]
    coupled_idx = list(range(n_discrete_modes)) if coupled == "all" else coupled
    for m in coupled_idx:
        if m >= n_discrete_modes:
            errors.append(f"window/coupled_discrete: mode {m} is not a discrete mode "
                          f"(only {n_discrete_modes} discrete modes)")
    if not coupled_idx:
        errors.append("window/coupled_discrete: at least one coupled discrete mode is required")
    mode_energy = [e for e, g in levels for _ in range(g)]
    coupled_levels = sorted({mode_energy[m] for m in coupled_idx if m < n_discrete_modes})
    gaps = [b - a for a, b in zip(coupled_levels, coupled_levels[1:])]
    if gaps:
        limit = 0.5 * min(gaps)
        if params["delta_width"] >= limit:
            errors.append(f"params/delta_width: {params['delta_width']} must be below {limit:.6g}, half the "
                          f"smallest gap {min(gaps):.6g} between coupled discrete energies")
    for k, c in enumerate(raw["couplings"]):
        if "matrix" in c:
            shape = (len(c["matrix"]), *{len(row) for row in c["matrix"]})
            if shape != (d_tot, d_tot):
                errors.append(f"couplings/{k}/matrix: shape {shape} does not match atom dimension {d_tot}")
        for m in c.get("decouple_modes", []):
            if m >= d_tot:
                errors.append(f"couplings/{k}/decouple_modes: mode {m} outside atom dimension {d_tot}")
    return errors


def validate(raw) -> RunConfig:
    errors = schema_errors(raw)
    if not errors:
        errors = semantic_errors(raw)
    if errors:
        raise ConfigError(errors)
    return RunConfig(raw)


def load(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    return validate(raw)


def shipped_config(name: str = "reference") -> RunConfig:
    text = resources.files("llab").joinpath("data", f"{name}.json").read_text()
    return validate(json.loads(text))
