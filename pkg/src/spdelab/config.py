"""Experiment configuration: JSON schema, validation and range expansion."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .core import SpectralField, SpectralSymbols, heat_kernel_datum, single_mode

__all__ = ["EXPERIMENTS", "SCHEMA", "ConfigError", "ExperimentConfig", "load_config", "expand_range"]

EXPERIMENTS = ("PhaseDiagram", "BlowUpCurve", "MomentVsTime", "MultiplierReport", "SchemeConvergence", "FourthOrder")

_RANGE = {
    "oneOf": [
        {"type": "number"},
        {
            "type": "object",
            "properties": {
                "start": {"type": "number"},
                "stop": {"type": "number"},
                "step": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["start", "stop", "step"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"values": {"type": "array", "items": {"type": "number"}, "minItems": 1}},
            "required": ["values"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "spdelab experiment",
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "params": {
            "type": "object",
            "properties": {k: _RANGE for k in ("alpha", "beta", "p", "q", "s")},
            "required": ["alpha", "beta"],
            "additionalProperties": False,
        },
        "times": _RANGE,
        "initial": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {"kind": {"const": "GaussianWidth"}, "delta": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["kind", "delta"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"kind": {"const": "SingleMode"}, "n": {"type": "integer"}},
                    "required": ["kind", "n"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"kind": {"const": "CustomCoeffFile"}, "path": {"type": "string"}},
                    "required": ["kind", "path"],
                    "additionalProperties": False,
                },
            ]
        },
        "numerics": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "gridPoints": {"type": "integer", "minimum": 1},
                "quadNodes": {"type": "integer", "minimum": 2},
                "paths": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "steps": {"type": "integer", "minimum": 1},
                "levels": {"type": "integer", "minimum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["csv", "csv+json"]},
            },
            "additionalProperties": False,
        },
    },
    "required": ["experiment", "params"],
    "additionalProperties": False,
}

DEFAULT_NUMERICS = {"N": 64, "gridPoints": None, "quadNodes": 16, "paths": 0, "seed": None, "steps": 256, "levels": 4, "eps": None}
DEFAULT_PARAMS = {"p": 2.0, "q": 2.0, "s": 0.0}
DEFAULT_TIMES = {"values": [0.5]}
MAX_RANGE = 100_000


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


def expand_range(spec) -> list[float]:
    """Grid of a range spec: a number, ``{values}`` or inclusive ``{start, stop, step}``."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if "values" in spec:
        return [float(v) for v in spec["values"]]
    start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
    if stop < start:
        raise ConfigError(f"empty range: stop {stop} < start {start}")
    count = math.floor((stop - start) / step + 1e-9) + 1
    if count > MAX_RANGE:
        raise ConfigError(f"range has {count} points, limit is {MAX_RANGE}")
    # rounding keeps 0.1-steps from printing as 0.30000000000000004
    return [round(start + k * step, 12) for k in range(count)]


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict  # name -> list of values
    times: list
    initial: dict
    numerics: dict
    output: dict
    base_dir: Path
    raw: dict

    def resolved(self) -> dict:
        """Fully expanded config for the manifest."""
        return {
            "experiment": self.experiment,
            "params": {k: {"values": v} for k, v in self.params.items()},
            "times": {"values": self.times},
            "initial": self.initial,
            "numerics": self.numerics,
            "output": self.output,
        }

    def with_seed(self, seed: int) -> "ExperimentConfig":
        numerics = dict(self.numerics, seed=int(seed))
        return ExperimentConfig(self.experiment, self.params, self.times, self.initial, numerics, self.output, self.base_dir, self.raw)

    def make_initial(self, symbols: SpectralSymbols) -> SpectralField:
        N = self.numerics["N"]
        kind = self.initial["kind"]
        if kind == "GaussianWidth":
            return heat_kernel_datum(N, self.initial["delta"], symbols)
        if kind == "SingleMode":
            return single_mode(N, self.initial["n"])
        return read_coeff_file(self.base_dir / self.initial["path"], N)


def read_coeff_file(path: Path, N: int) -> SpectralField:
    """JSON file ``{"coeffs": [[re, im], ...]}`` with ``2M+1`` entries, ``M <= N``."""
    try:
        data = json.loads(Path(path).read_text())
        pairs = np.asarray(data["coeffs"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read coefficient file {path}: {exc}") from exc
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] % 2 != 1:
        raise ConfigError(f"{path}: expected an odd-length list of [re, im] pairs")
    M = pairs.shape[0] // 2
    if M > N:
        raise ConfigError(f"{path}: {2 * M + 1} coefficients exceed truncation N={N}")
    coeffs = np.zeros(2 * N + 1, dtype=complex)
    coeffs[N - M : N + M + 1] = pairs[:, 0] + 1j * pairs[:, 1]
    return SpectralField(N, coeffs)


def parse_config(raw: dict, base_dir: Path = Path(".")) -> ExperimentConfig:
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc
    params = {k: expand_range(raw["params"].get(k, DEFAULT_PARAMS.get(k))) for k in ("alpha", "beta", "p", "q", "s")}
    for name, vals in params.items():
        if name in ("p", "q") and min(vals) <= 1:
            raise ConfigError(f"params/{name}: values must exceed 1")
        if name == "beta" and min(vals) < 0:
            raise ConfigError("params/beta: values must be non-negative")
    times = expand_range(raw.get("times", DEFAULT_TIMES))
    if min(times) < 0:
        raise ConfigError("times: values must be non-negative")
    numerics = dict(DEFAULT_NUMERICS)
    numerics.update(raw.get("numerics", {}))
    if numerics["paths"] > 0 and numerics["seed"] is None:
        raise ConfigError("numerics/seed: required when paths > 0")
    if numerics["paths"] and numerics["paths"] < 100:
        raise ConfigError("numerics/paths: use 0 or at least 100 paths")
    initial = copy.deepcopy(raw.get("initial", {"kind": "GaussianWidth", "delta": 1.0}))
    if initial["kind"] == "SingleMode" and abs(initial["n"]) > numerics["N"]:
        raise ConfigError(f"initial/n: mode {initial['n']} outside truncation N={numerics['N']}")
    output = {"path": "results", "format": "csv"}
    output.update(raw.get("output", {}))
    cfg = ExperimentConfig(raw["experiment"], params, times, initial, numerics, output, base_dir, raw)
    if initial["kind"] == "CustomCoeffFile":
        read_coeff_file(base_dir / initial["path"], numerics["N"])
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw, path.resolve().parent)
