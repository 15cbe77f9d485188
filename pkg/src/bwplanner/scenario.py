"""Scenario files: one JSON document describing a system and what to do with it."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

import jsonschema

from . import analytic as an
from .approximation import map_costs
from .distributions import Constant, Exponential, from_spec, length_from_spec
from .errors import BwPlannerError, UnstableSystem
from .optimizer import OptimizationProblem
from .simulator import HORIZON_KINDS, MODES, SystemConfig

SCHEMA_VERSION = "bw-planner/1"

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}
_quota = {"anyOf": [{"type": "integer", "minimum": 0}, {"type": "null"}]}


def _dist_schema():
    def rec(family, props, required):
        return {
            "type": "object",
            "properties": {"family": {"const": family}, **props},
            "required": ["family", *required],
            "additionalProperties": False,
        }

    return {
        "oneOf": [
            rec("exponential", {"rate": _pos}, ["rate"]),
            rec("deterministic", {"value": _pos}, ["value"]),
            rec("erlang", {"shape": {"type": "integer", "minimum": 1}, "rate": _pos}, ["shape", "rate"]),
            rec(
                "hyperexponential2",
                {"p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, "rate1": _pos, "rate2": _pos},
                ["p", "rate1", "rate2"],
            ),
            rec("thinned", {"base": {"$ref": "#/$defs/dist"}, "p": _prob}, ["base", "p"]),
        ]
    }


_LENGTH = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"family": {"const": "constant"}, "value": {"type": "integer", "minimum": 1}},
            "required": ["family"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"family": {"const": "geometric"}, "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            "required": ["family", "p"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "family": {"const": "uniform"},
                "low": {"type": "integer", "minimum": 1},
                "high": {"type": "integer", "minimum": 1},
            },
            "required": ["family", "low", "high"],
            "additionalProperties": False,
        },
    ]
}


def _block(props):
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"dist": _dist_schema(), "length": _LENGTH},
    "type": "object",
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "arrival": {"$ref": "#/$defs/dist"},
        "thinning": {"type": "array", "items": _prob, "minItems": 1},
        "class_arrivals": {"type": "array", "items": {"$ref": "#/$defs/dist"}, "minItems": 1},
        "unit_length": {
            "anyOf": [{"$ref": "#/$defs/length"}, {"type": "array", "items": {"$ref": "#/$defs/length"}}]
        },
        "mu": _pos,
        "service": {"$ref": "#/$defs/dist"},
        "C": {"type": "integer", "minimum": 1},
        "buffer_mode": {"enum": list(MODES)},
        "quotas_class": {"type": "array", "items": _quota},
        "quotas_cum": {"type": "array", "items": _quota},
        "alpha_class": {"type": "array", "items": _nonneg},
        "alpha_cum": {"type": "array", "items": _nonneg},
        "beta_class": {"type": "array", "items": _pos},
        "horizon": {"type": "integer", "minimum": 0},
        "horizon_kind": {"enum": list(HORIZON_KINDS)},
        "warmup_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "replications": {"type": "integer", "minimum": 1},
        "hist_levels": {"type": "integer", "minimum": 2},
        "solve": _block(
            {
                "N": {"anyOf": [{"type": "integer", "minimum": 1}, {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.2},
                "Delta": _pos,
            }
        ),
        "optimize": _block(
            {
                "decision": {"enum": ["quota_N1", "depletion_C"]},
                "epsilon": _pos,
                "C": {"type": "integer", "minimum": 1},
                "N1": {"type": "integer", "minimum": 0},
                "quotas_cum": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "mode": {"enum": ["infinite", "finite"]},
            }
        ),
        "validate": _block(
            {
                "levels": {"type": "integer", "minimum": 1},
                "horizon": {"type": "integer", "minimum": 0},
                "tv_threshold": _pos,
            }
        ),
        "output": _block(
            {
                "dir": {"type": "string"},
                "trajectory_csv": {"type": "boolean"},
                "record_every": {"type": "integer", "minimum": 1},
            }
        ),
    },
    "required": ["schema", "arrival", "thinning", "mu"],
    "additionalProperties": False,
}


class ScenarioError(BwPlannerError):
    """The scenario document is malformed or inconsistent."""


@dataclass(frozen=True)
class Scenario:
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def block(self, name) -> dict:
        return self.raw.get(name, {})

    @property
    def ell(self) -> int:
        return len(self.raw["thinning"])

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))


def validate(doc: Any) -> Scenario:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario invalid at {where}: {exc.message}") from None
    ell = len(doc["thinning"])
    for key in ("quotas_class", "quotas_cum", "alpha_class", "alpha_cum"):
        if key in doc and len(doc[key]) != ell:
            raise ScenarioError(f"{key} needs {ell} entries")
    if "beta_class" in doc and len(doc["beta_class"]) != ell - 1:
        raise ScenarioError(f"beta_class needs {ell - 1} entries")
    if isinstance(doc.get("unit_length"), list) and len(doc["unit_length"]) != ell:
        raise ScenarioError(f"unit_length needs {ell} entries")
    if "class_arrivals" in doc and len(doc["class_arrivals"]) != ell:
        raise ScenarioError(f"class_arrivals needs {ell} entries")
    return Scenario(doc)


def load(path) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    return validate(doc)


def _require(sc: Scenario, key: str, why: str):
    if key not in sc.raw:
        raise ScenarioError(f"'{key}' is required {why}")
    return sc.raw[key]


def cumulative_models(sc: Scenario, C: Optional[int] = None):
    C = C if C is not None else _require(sc, "C", "for analytic results")
    return an.cumulative_models(from_spec(sc["arrival"]), sc["thinning"], sc["mu"], C)


def analytic_applicable(sc: Scenario) -> bool:
    service = sc.get("service")
    if service is not None:
        d = from_spec(service)
        if not (isinstance(d, Exponential) and abs(d.rate - sc["mu"]) <= 1e-12 * sc["mu"]):
            return False
    return "class_arrivals" not in sc.raw


def alpha_cum(sc: Scenario, C: Optional[int] = None):
    """Cumulative costs: given explicitly, else mapped from the class costs via the roots."""
    if "alpha_cum" in sc.raw:
        return tuple(sc["alpha_cum"])
    alpha_class = tuple(sc.get("alpha_class", [1.0] * sc.ell))
    if sc.ell == 1 or not analytic_applicable(sc):
        return alpha_class
    try:
        roots = [an.solve_root(m) for m in cumulative_models(sc, C)]
    except UnstableSystem:
        return alpha_class
    return map_costs(alpha_class, roots).alpha_cum


def system_config(sc: Scenario, *, record: bool = False, record_every: int = 1, horizon=None) -> SystemConfig:
    ell = sc.ell
    ul = sc.get("unit_length")
    if ul is None:
        lengths = (Constant(1),) * ell
    elif isinstance(ul, list):
        lengths = tuple(length_from_spec(x) for x in ul)
    else:
        lengths = (length_from_spec(ul),) * ell
    return SystemConfig(
        arrival=from_spec(sc["arrival"]),
        thinning=tuple(sc["thinning"]),
        mu=float(sc["mu"]),
        C=int(_require(sc, "C", "to simulate")),
        buffer_mode=sc.get("buffer_mode", "infinite"),
        quotas_class=tuple(sc["quotas_class"]) if "quotas_class" in sc.raw else None,
        quotas_cum=tuple(sc["quotas_cum"]) if "quotas_cum" in sc.raw else None,
        alpha_class=tuple(sc["alpha_class"]) if "alpha_class" in sc.raw else None,
        alpha_cum=alpha_cum(sc),
        unit_length=lengths,
        service=from_spec(sc["service"]) if "service" in sc.raw else None,
        class_arrivals=tuple(from_spec(d) for d in sc["class_arrivals"]) if "class_arrivals" in sc.raw else None,
        horizon=int(sc.get("horizon", 100_000) if horizon is None else horizon),
        horizon_kind=sc.get("horizon_kind", "arrivals"),
        warmup_fraction=float(sc.get("warmup_fraction", 0.1)),
        seed=sc.seed,
        record=record,
        record_every=record_every,
        hist_levels=int(sc.get("hist_levels", 0)),
    )


def optimization_problem(sc: Scenario) -> OptimizationProblem:
    opt = sc.block("optimize")
    if "epsilon" not in opt:
        raise ScenarioError("'optimize.epsilon' is required to optimize")
    decision = opt.get("decision", "quota_N1")
    C = opt.get("C", sc.get("C"))
    quotas = opt.get("quotas_cum", sc.get("quotas_cum"))
    return OptimizationProblem(
        arrival=from_spec(sc["arrival"]),
        thinning=tuple(sc["thinning"]),
        mu=float(sc["mu"]),
        epsilon=float(opt["epsilon"]),
        decision=decision,
        C=C,
        N1=opt.get("N1"),
        quotas_cum=tuple(quotas) if (decision == "depletion_C" and quotas is not None and "N1" not in opt) else None,
        alpha_class=tuple(sc["alpha_class"]) if "alpha_class" in sc.raw else None,
        alpha_cum=tuple(sc["alpha_cum"]) if "alpha_cum" in sc.raw else None,
        beta_class=tuple(sc.get("beta_class", [1.0] * (sc.ell - 1))),
        mode=opt.get("mode", "infinite"),
    )
