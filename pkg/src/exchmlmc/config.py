"""Run configuration: JSON file validated against :data:`CONFIG_SCHEMA`."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema

from .factor_model import StructuralModel, StructuralParams
from .geometry import LevelGeometry
from .loss_models import BetaFactor, DiscreteFactor, VasicekOneFactor
from .mlmc import DEFAULT_BUDGET, DEFAULT_PILOT, EstimatorKind
from .payoff import GenericPayoff, TrancheQuote, TranchePayoff, identity_payoff, quote_to_payoff, square_payoff

log = logging.getLogger(__name__)

_num = {"type": "number"}
_frac = {"type": "number", "minimum": 0, "maximum": 1}


def _obj(required, **props):
    return {"type": "object", "required": list(required), "additionalProperties": False, "properties": props}


CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "exchmlmc run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "payoff", "geometry"],
    "properties": {
        "model": {
            "oneOf": [
                _obj(
                    ["type", "atoms"],
                    type={"const": "discrete"},
                    atoms={"type": "array", "minItems": 1, "items": {"type": "array", "prefixItems": [_frac, _frac], "minItems": 2, "maxItems": 2}},
                ),
                _obj(["type", "alpha", "beta"], type={"const": "beta"}, alpha={"type": "number", "exclusiveMinimum": 0}, beta={"type": "number", "exclusiveMinimum": 0}),
                _obj(["type", "pd", "rho"], type={"const": "vasicek"}, pd=_frac, rho=_frac),
                _obj(
                    ["type"],
                    type={"const": "structural"},
                    mu_x0=_num,
                    sigma_x0={"type": "number", "exclusiveMinimum": 0},
                    beta_drift=_num,
                    rho=_frac,
                    jump_intensity={"type": "number", "minimum": 0},
                    jump_mean=_num,
                    jump_var={"type": "number", "minimum": 0},
                    maturity={"type": "number", "exclusiveMinimum": 0},
                    obs_interval={"type": "number", "exclusiveMinimum": 0},
                    proxy_size={"type": "integer", "minimum": 1},
                ),
            ]
        },
        "payoff": {
            "oneOf": [
                _obj(["type", "k1", "k2"], type={"const": "tranche"}, k1=_frac, k2=_frac),
                _obj(["type", "attach", "detach"], type={"const": "quote"}, attach=_frac, detach=_frac, recovery=_frac),
                _obj(["type", "name"], type={"const": "generic"}, name={"enum": ["identity", "square"]}),
            ]
        },
        "geometry": _obj(
            ["K"],
            M={"type": "integer", "minimum": 2},
            N0={"type": "integer", "minimum": 1},
            K={"type": "integer", "minimum": 0},
        ),
        "estimator": {"enum": ["standard", "improved"]},
        "gamma": {"type": "number"},
        "pilot_n": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "budget": {"type": "number", "exclusiveMinimum": 0},
        "output_dir": {"type": "string"},
        "cdf": _obj([], samples={"type": "integer", "minimum": 1}, grid={"type": "integer", "minimum": 2}),
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    raw: dict
    model: object
    payoff: object
    quote: Optional[TrancheQuote]
    geometry: LevelGeometry
    estimator: EstimatorKind
    gamma: float
    pilot_n: int
    seed: int
    budget: float
    output_dir: Path
    cdf_samples: int
    cdf_grid: int

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _build_model(block: dict):
    kind = block["type"]
    if kind == "discrete":
        return DiscreteFactor(tuple(tuple(a) for a in block["atoms"]))
    if kind == "beta":
        return BetaFactor(block["alpha"], block["beta"])
    if kind == "vasicek":
        return VasicekOneFactor(block["pd"], block["rho"])
    params = {k: v for k, v in block.items() if k not in ("type", "proxy_size")}
    if "beta_drift" not in params:
        log.warning("structural model: beta_drift not given, using 0")
    model = StructuralModel(StructuralParams(**params))
    if "proxy_size" in block:
        model = StructuralModel(model.params, block["proxy_size"])
    return model


def _build_payoff(block: dict):
    kind = block["type"]
    if kind == "tranche":
        return TranchePayoff(block["k1"], block["k2"]), None
    if kind == "quote":
        quote = TrancheQuote(block["attach"], block["detach"], block.get("recovery", 0.4))
        return quote_to_payoff(quote), quote
    return {"identity": identity_payoff, "square": square_payoff}[block["name"]](), None


def parse_config(raw: dict, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    try:
        model = _build_model(raw["model"])
        payoff, quote = _build_payoff(raw["payoff"])
        geometry = LevelGeometry(**raw["geometry"])
        gamma = float(raw.get("gamma", 1e-3))
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    cdf = raw.get("cdf", {})
    return RunConfig(
        raw=raw,
        model=model,
        payoff=payoff,
        quote=quote,
        geometry=geometry,
        estimator=EstimatorKind(raw.get("estimator", "improved")),
        gamma=gamma,
        pilot_n=int(raw.get("pilot_n", DEFAULT_PILOT)),
        seed=int(raw.get("seed", 0)),
        budget=float(raw.get("budget", DEFAULT_BUDGET)),
        output_dir=Path(output_dir if output_dir is not None else raw.get("output_dir", "out")),
        cdf_samples=int(cdf.get("samples", 100_000)),
        cdf_grid=int(cdf.get("grid", 101)),
    )


def load_config(path, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw, seed, output_dir)
