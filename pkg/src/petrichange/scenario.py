"""Scenario documents: schema, validation and the in-memory configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .analysis import TEMPLATE_UNSAFE, UnsafeSpec
from .changes import ServiceDescriptor, descriptor_from_dict, operation_from_dict
from .detection import PollingConfig
from .healthcare import DEFAULT_TAIL, healthcare_process
from .hierarchy import SEP, HierarchicalNet, flatten, hnet_from_dict
from .petri import Marking, Net, PetriError
from .reaction import STRATEGIES, ReactionPolicy
from .reconfig import RewriteRule, rule_from_dict


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(ScenarioError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


FAULT_FIELDS = ("available", "reliable", "cost", "responsiveness", "operations", "advertised")

_ids = {"type": "array", "items": {"type": "string", "minLength": 1}}
_pairs = {
    "oneOf": [
        {"type": "object", "additionalProperties": {"type": "string"}},
        {"type": "array", "items": {"type": "array", "items": {"type": "string"},
                                    "minItems": 2, "maxItems": 2}},
    ]
}
_arcs = {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 3}}
_net = {
    "type": "object",
    "required": ["places", "transitions", "p_in", "p_out"],
    "additionalProperties": False,
    "properties": {
        "places": _ids, "transitions": _ids, "arcs": _arcs,
        "p_in": {"type": "string"}, "p_out": {"type": "string"},
        "guards": {"type": "object", "additionalProperties": {"type": "string"}},
        "alphabet": _ids,
        "names": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}
_fragment = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "places": _ids, "transitions": _ids, "arcs": _arcs, "ports": _ids,
        "guards": {"type": "object", "additionalProperties": {"type": "string"}},
    },
}
_operation = {
    "type": "object",
    "required": ["name"],
    "additionalProperties": False,
    "properties": {"name": {"type": "string", "minLength": 1}, "inputs": _pairs,
                   "outputs": _pairs, "behavior": {"type": "string"}},
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "petrichange scenario",
    "type": "object",
    "required": ["services", "process", "max_ticks"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "services": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "role_name"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "role_name": {"type": "string"},
                    "operations": {"type": "array", "items": _operation},
                    "available": {"type": "boolean"},
                    "reliable": {"type": "boolean"},
                    "cost": {"type": "number", "minimum": 0},
                    "responsiveness": {"type": "number", "minimum": 0},
                    "critical": {"type": "boolean"},
                    "substitutes": _ids,
                    "advertised": {"type": "boolean"},
                },
            },
        },
        "process": {
            "oneOf": [
                {"type": "string", "enum": ["builtin:healthcare"]},
                {"type": "object", "required": ["builtin"], "additionalProperties": False,
                 "properties": {"builtin": {"enum": ["healthcare"]}, "tail": _ids}},
                {"type": "object", "required": ["root"], "additionalProperties": False,
                 "properties": {"root": _net, "refinements": {"type": "array", "items": {
                     "type": "object", "required": ["path", "subnet"], "additionalProperties": False,
                     "properties": {"path": {"type": "string"}, "subnet": _net}}}}},
            ]
        },
        "initial_marking": {"type": "object"},
        "bindings": {"type": "object", "additionalProperties": {"type": "string"}},
        "invoked": {"type": "object", "additionalProperties": _ids},
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "omega_kind", "match", "replacement"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "omega_kind": {"enum": ["AlterState", "AlterServiceInstance", "AlterOrder", "AlterCost"]},
                    "match": _fragment,
                    "replacement": _fragment,
                    "token_transfer": {"type": "object", "additionalProperties": {"type": "string"}},
                    "port_map": {"type": "object", "additionalProperties": {"type": "string"}},
                    "target": {"type": "string"},
                },
            },
        },
        "fault_schedule": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["tick", "service_id", "field", "new_value"],
                "additionalProperties": False,
                "properties": {
                    "tick": {"type": "integer", "minimum": 0},
                    "service_id": {"type": "string"},
                    "field": {"enum": list(FAULT_FIELDS)},
                    "new_value": {},
                },
            },
        },
        "polling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"interval_ticks": {"type": "integer", "minimum": 1},
                           "alive_timeout_ticks": {"type": "integer", "minimum": 1}},
        },
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"heartbeat_limit": {"type": "integer", "minimum": 1},
                           "substitution_strategy": {"enum": list(STRATEGIES)}},
        },
        "seed": {"type": "integer"},
        "max_ticks": {"type": "integer", "minimum": 1},
        "dead_band": {"type": "number", "minimum": 0},
        "unsafe": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"kind": {"enum": ["token_in", "exceeds", "never"]}, "places": _ids,
                           "label": {"type": "string"}, "limit": {"type": "integer", "minimum": 0}},
        },
    },
}


@dataclass(frozen=True)
class Fault:
    tick: int
    service_id: str
    field: str
    new_value: Any

    def to_dict(self) -> dict:
        return {"tick": self.tick, "service_id": self.service_id, "field": self.field,
                "new_value": self.new_value}


@dataclass(frozen=True)
class ScenarioConfig:
    services: tuple[ServiceDescriptor, ...]
    process: HierarchicalNet
    rules: tuple[RewriteRule, ...] = ()
    fault_schedule: tuple[Fault, ...] = ()
    polling: PollingConfig = PollingConfig()
    policy: ReactionPolicy = ReactionPolicy()
    seed: int = 0
    max_ticks: int = 100
    name: str = "scenario"
    advertised: frozenset[str] = frozenset()
    bindings: Mapping[str, str] = field(default_factory=dict)
    composites: frozenset[str] = frozenset()
    invoked: Mapping[str, frozenset[str]] = field(default_factory=dict)
    initial_marking: Marking | None = None
    dead_band: float = 0.0
    unsafe: UnsafeSpec = TEMPLATE_UNSAFE
    document: Mapping = field(default_factory=dict, compare=False, repr=False)

    def service(self, sid: str) -> ServiceDescriptor:
        for s in self.services:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def flat_net(self) -> Net:
        return flatten(self.process)

    def initial(self) -> Marking:
        if self.initial_marking is not None:
            return self.initial_marking
        return Marking({self.process.root.p_in: 1})


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _parse(document) -> Mapping:
    if isinstance(document, Mapping):
        return document
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    if not isinstance(data, dict):
        raise ParseError("scenario document must be a JSON object")
    return data


def _process(spec) -> HierarchicalNet:
    if spec == "builtin:healthcare":
        return healthcare_process()
    if "builtin" in spec:
        return healthcare_process(tuple(spec.get("tail", DEFAULT_TAIL)))
    return hnet_from_dict(spec)


def _bindings(flat: Net, process: HierarchicalNet, services, explicit: Mapping[str, str]):
    by_last: dict[str, list[str]] = {}
    for t in flat.sorted_transitions():
        by_last.setdefault(t.rpartition(SEP)[2], []).append(t)
    refined = {k.rpartition(SEP)[2] for k, _ in process.refinements}
    bindings, composites = {}, set()
    for s in services:
        if s.id in explicit:
            continue
        hits = by_last.get(s.id, [])
        if len(hits) == 1:
            bindings[s.id] = hits[0]
        elif s.id in refined:
            composites.add(s.id)
    for sid, t in explicit.items():
        if t not in flat.transitions:
            raise ValidationError(f"bindings.{sid}", f"no transition {t!r} in the flattened process")
        bindings[sid] = t
    return bindings, frozenset(composites)


def load_scenario(document) -> ScenarioConfig:
    """Parse and validate a scenario given as JSON text or an already-decoded dict."""
    data = _parse(document)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ValidationError(_json_path(err.absolute_path), err.message)

    try:
        services = tuple(descriptor_from_dict(s) for s in data["services"])
    except PetriError as exc:
        raise ValidationError("$.services", str(exc)) from None
    ids = [s.id for s in services]
    if len(set(ids)) != len(ids):
        raise ValidationError("$.services", "duplicate service id")
    known = set(ids)
    for i, s in enumerate(services):
        for sub in s.substitutes:
            if sub not in known:
                raise ValidationError(f"$.services[{i}].substitutes", f"unknown service {sub!r}")
    advertised = frozenset(s["id"] for s in data["services"] if s.get("advertised", True))

    max_ticks = data["max_ticks"]
    faults = []
    for i, f in enumerate(data.get("fault_schedule", [])):
        where = f"$.fault_schedule[{i}]"
        if f["service_id"] not in known:
            raise ValidationError(f"{where}.service_id", f"unknown service {f['service_id']!r}")
        if f["tick"] > max_ticks:
            raise ValidationError(f"{where}.tick", f"tick {f['tick']} exceeds max_ticks {max_ticks}")
        value = f["new_value"]
        if f["field"] in ("available", "reliable", "advertised") and not isinstance(value, bool):
            raise ValidationError(f"{where}.new_value", "expected a boolean")
        if f["field"] in ("cost", "responsiveness") and (
                isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0):
            raise ValidationError(f"{where}.new_value", "expected a non-negative number")
        if f["field"] == "operations":
            try:
                value = [operation_from_dict(o) for o in value]
            except (TypeError, KeyError, AttributeError):
                raise ValidationError(f"{where}.new_value", "expected a list of operations") from None
        faults.append(Fault(f["tick"], f["service_id"], f["field"], f["new_value"]))

    try:
        process = _process(data["process"])
        flat = flatten(process)
    except PetriError as exc:
        raise ValidationError("$.process", str(exc)) from None
    try:
        rules = tuple(rule_from_dict(r) for r in data.get("rules", []))
    except PetriError as exc:
        raise ValidationError("$.rules", str(exc)) from None
    bindings, composites = _bindings(flat, process, services, data.get("bindings", {}))
    for sid in data.get("bindings", {}):
        if sid not in known:
            raise ValidationError(f"$.bindings.{sid}", f"unknown service {sid!r}")
    invoked = {s.id: s.op_names for s in services}
    for sid, ops in data.get("invoked", {}).items():
        if sid not in known:
            raise ValidationError(f"$.invoked.{sid}", f"unknown service {sid!r}")
        invoked[sid] = frozenset(ops)

    initial = None
    if "initial_marking" in data:
        try:
            initial = Marking(data["initial_marking"])
        except (ValueError, TypeError) as exc:
            raise ValidationError("$.initial_marking", str(exc)) from None
        stray = set(initial.places()) - flat.places
        if stray:
            raise ValidationError("$.initial_marking", f"unknown places {sorted(stray)}")

    polling = PollingConfig(**data.get("polling", {}))
    policy = ReactionPolicy(**data.get("policy", {}))
    unsafe = UnsafeSpec.from_dict(data["unsafe"]) if "unsafe" in data else TEMPLATE_UNSAFE
    return ScenarioConfig(
        services=services,
        process=process,
        rules=rules,
        fault_schedule=tuple(faults),
        polling=polling,
        policy=policy,
        seed=data.get("seed", 0),
        max_ticks=max_ticks,
        name=data.get("name", "scenario"),
        advertised=advertised,
        bindings=bindings,
        composites=composites,
        invoked=invoked,
        initial_marking=initial,
        dead_band=data.get("dead_band", 0.0),
        unsafe=unsafe,
        document=data,
    )


def load_scenario_file(path: str | Path) -> ScenarioConfig:
    return load_scenario(Path(path).read_text(encoding="utf-8"))
