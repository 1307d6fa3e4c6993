"""Scenario documents: JSON schema, semantic validation and loading."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import jsonschema

from .network import PlmnConfig, SubscriptionRecord, home_plmn
from .protocol import RoutingFailure, UeCategory
from .radio import LinkBudgetConfig, config_problems
from .vehicle import OnDemand, Periodic, QoS, ServiceDescriptor

ACTIONS = ("activate_service", "deactivate_service", "send", "at_command")

_number = {"type": "number"}
_ms = {"type": "integer", "minimum": 0}

SCHEMA = {
    "type": "object",
    "required": ["sim", "plmns", "vehicles"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "sim": {
            "type": "object",
            "required": ["duration_ms"],
            "additionalProperties": False,
            "properties": {
                "duration_ms": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "jitter_ms": _ms,
                "attach_timeout_ms": {"type": "integer", "minimum": 1},
                "latencies": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"uu_ms": _ms, "s1_ms": _ms, "diameter_ms": _ms, "backhaul_ms": _ms},
                },
            },
        },
        "radio": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "normal_mcl": _number,
                "gain_per_doubling": _number,
                "repetition_set": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "hysteresis": _number,
            },
        },
        "plmns": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["plmn_id", "cells", "mme"],
                "additionalProperties": False,
                "properties": {
                    "plmn_id": {"type": "string", "pattern": r"^\d{5,6}$"},
                    "supports_ce_mode_a_high_category": {"type": "boolean"},
                    "cells": {"type": "array", "items": {"type": "string", "minLength": 1}},
                    "mme": {"type": "string", "minLength": 1},
                    "hss": {"type": ["string", "null"]},
                },
            },
        },
        "subscriptions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["imsi"],
                "additionalProperties": False,
                "properties": {
                    "imsi": {"type": "string", "pattern": r"^\d{15}$"},
                    "enhanced_coverage_restricted": {"type": "boolean"},
                },
            },
        },
        "vehicles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "imsi", "cell", "coverage_trace"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "imsi": {"type": "string", "pattern": r"^\d{15}$"},
                    "ue_category": {"enum": [c.value for c in UeCategory]},
                    "restriction_supported": {"type": "boolean"},
                    "cell": {"type": "string"},
                    "ce_policy": {"enum": ["dynamic", "never"]},
                    "coverage_trace": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "array",
                            "prefixItems": [_ms, _number],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    },
                    "services": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "qos", "traffic"],
                            "additionalProperties": False,
                            "properties": {
                                "name": {"type": "string", "minLength": 1},
                                "qos": {"enum": [q.value for q in QoS]},
                                "active": {"type": "boolean"},
                                "direction": {"enum": ["uplink", "downlink"]},
                                "traffic": {
                                    "type": "object",
                                    "required": ["type", "payload_subframes"],
                                    "additionalProperties": False,
                                    "properties": {
                                        "type": {"enum": ["periodic", "on_demand"]},
                                        "period_s": {"type": "number", "exclusiveMinimum": 0},
                                        "payload_subframes": {"type": "integer", "minimum": 1},
                                    },
                                },
                            },
                        },
                    },
                    "scripted_events": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["time", "action"],
                            "additionalProperties": False,
                            "properties": {
                                "time": _ms,
                                "action": {"enum": list(ACTIONS)},
                                "service": {"type": "string"},
                                "command": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Latencies:
    uu_ms: int = 10
    s1_ms: int = 5
    diameter_ms: int = 20
    backhaul_ms: int = 5


@dataclass(frozen=True)
class SimSettings:
    duration_ms: int
    seed: int = 0
    jitter_ms: int = 0
    attach_timeout_ms: int = 15000
    latencies: Latencies = field(default_factory=Latencies)


@dataclass(frozen=True)
class ScriptedEvent:
    time: int
    action: str
    service: Optional[str] = None
    command: Optional[str] = None


@dataclass
class VehicleSpec:
    id: str
    imsi: str
    cell: str
    coverage_trace: list[tuple[int, float]]
    ue_category: UeCategory = UeCategory.HIGH_CATEGORY
    restriction_supported: bool = False
    ce_policy: str = "dynamic"
    services: list[ServiceDescriptor] = field(default_factory=list)
    scripted_events: list[ScriptedEvent] = field(default_factory=list)


@dataclass
class Scenario:
    sim: SimSettings
    radio: LinkBudgetConfig
    plmns: list[PlmnConfig]
    subscriptions: list[SubscriptionRecord]
    vehicles: list[VehicleSpec]
    name: str = ""


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate_document(doc) -> list[Diagnostic]:
    """Structural and referential checks. An empty list means runnable."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    diags = [
        Diagnostic(_path(err.absolute_path), err.message)
        for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    ]
    if diags:
        return diags

    radio = doc.get("radio", {})
    defaults = LinkBudgetConfig()
    for problem in config_problems(
        radio.get("normal_mcl", defaults.normal_mcl),
        radio.get("gain_per_doubling", defaults.gain_per_doubling),
        radio.get("repetition_set", list(defaults.repetition_set)),
        radio.get("hysteresis", defaults.hysteresis),
    ):
        diags.append(Diagnostic("radio", problem))

    duration = doc["sim"]["duration_ms"]
    plmn_ids, cells, nodes = [], set(), set()
    for i, p in enumerate(doc["plmns"]):
        where = f"plmns[{i}]"
        if p["plmn_id"] in plmn_ids:
            diags.append(Diagnostic(f"{where}.plmn_id", f"duplicate PLMN {p['plmn_id']}"))
        plmn_ids.append(p["plmn_id"])
        for c in p["cells"]:
            if c in cells:
                diags.append(Diagnostic(f"{where}.cells", f"cell {c!r} belongs to more than one PLMN"))
            cells.add(c)
        for role in ("mme", "hss"):
            node = p.get(role)
            if node is None:
                continue
            if node in nodes or node in cells:
                diags.append(Diagnostic(f"{where}.{role}", f"node id {node!r} is not unique"))
            nodes.add(node)

    def owner(imsi):
        try:
            return next(p for p in doc["plmns"] if p["plmn_id"] == home_plmn(imsi, plmn_ids))
        except RoutingFailure:
            return None

    subscribed = set()
    for i, s in enumerate(doc.get("subscriptions", [])):
        where = f"subscriptions[{i}].imsi"
        if s["imsi"] in subscribed:
            diags.append(Diagnostic(where, f"duplicate subscription {s['imsi']}"))
        subscribed.add(s["imsi"])
        plmn = owner(s["imsi"])
        if plmn is None:
            diags.append(Diagnostic(where, f"IMSI {s['imsi']} matches no configured PLMN"))
        elif not plmn.get("hss"):
            diags.append(Diagnostic(where, f"home PLMN {plmn['plmn_id']} has no HSS"))

    ids, imsis = set(), set()
    for i, v in enumerate(doc["vehicles"]):
        where = f"vehicles[{i}]"
        label = f"vehicle {v['id']!r}"
        if v["id"] in ids or v["id"] in cells or v["id"] in nodes:
            diags.append(Diagnostic(f"{where}.id", f"{label}: id is not unique"))
        ids.add(v["id"])
        if v["imsi"] in imsis:
            diags.append(Diagnostic(f"{where}.imsi", f"{label}: IMSI shared with another vehicle"))
        imsis.add(v["imsi"])
        if v["cell"] not in cells:
            diags.append(Diagnostic(f"{where}.cell", f"{label}: unknown cell {v['cell']!r}"))
        trace = v["coverage_trace"]
        if trace[0][0] != 0:
            diags.append(Diagnostic(f"{where}.coverage_trace", f"{label}: first sample must start at time 0"))
        for j, (t, loss) in enumerate(trace):
            if j and t <= trace[j - 1][0]:
                diags.append(
                    Diagnostic(f"{where}.coverage_trace[{j}]", f"{label}: start times must be strictly increasing")
                )
            if not math.isfinite(loss) or loss < 0:
                diags.append(
                    Diagnostic(f"{where}.coverage_trace[{j}]", f"{label}: coupling loss must be finite and >= 0")
                )
        names = set()
        for j, svc in enumerate(v.get("services", [])):
            if svc["name"] in names:
                diags.append(Diagnostic(f"{where}.services[{j}].name", f"{label}: duplicate service {svc['name']!r}"))
            names.add(svc["name"])
            if svc["traffic"]["type"] == "periodic" and "period_s" not in svc["traffic"]:
                diags.append(Diagnostic(f"{where}.services[{j}].traffic", f"{label}: periodic traffic needs period_s"))
            elif svc["traffic"]["type"] == "periodic" and round(svc["traffic"]["period_s"] * 1000) < 1:
                diags.append(Diagnostic(f"{where}.services[{j}].traffic", f"{label}: period below 1 ms"))
        for j, ev in enumerate(v.get("scripted_events", [])):
            ew = f"{where}.scripted_events[{j}]"
            if ev["time"] > duration:
                diags.append(Diagnostic(f"{ew}.time", f"{label}: event after the end of the simulation"))
            if ev["action"] == "at_command":
                if "command" not in ev:
                    diags.append(Diagnostic(ew, f"{label}: at_command needs a command"))
            elif ev.get("service") not in names:
                diags.append(Diagnostic(f"{ew}.service", f"{label}: unknown service {ev.get('service')!r}"))
    return diags


def _service(d) -> ServiceDescriptor:
    t = d["traffic"]
    if t["type"] == "periodic":
        traffic = Periodic(t["period_s"], t["payload_subframes"])
    else:
        traffic = OnDemand(t["payload_subframes"])
    return ServiceDescriptor(d["name"], QoS(d["qos"]), traffic, d.get("active", True), d.get("direction", "uplink"))


def build(doc) -> Scenario:
    diags = validate_document(doc)
    if diags:
        raise ScenarioError(diags)
    s = doc["sim"]
    sim = SimSettings(
        duration_ms=s["duration_ms"],
        seed=s.get("seed", 0),
        jitter_ms=s.get("jitter_ms", 0),
        attach_timeout_ms=s.get("attach_timeout_ms", 15000),
        latencies=Latencies(**s.get("latencies", {})),
    )
    r = doc.get("radio", {})
    radio = LinkBudgetConfig(**{k: (tuple(v) if k == "repetition_set" else v) for k, v in r.items()})
    plmns = [
        PlmnConfig(
            p["plmn_id"],
            p.get("supports_ce_mode_a_high_category", True),
            tuple(p["cells"]),
            p["mme"],
            p.get("hss"),
        )
        for p in doc["plmns"]
    ]
    subs = [SubscriptionRecord(x["imsi"], x.get("enhanced_coverage_restricted", False)) for x in doc.get("subscriptions", [])]
    vehicles = [
        VehicleSpec(
            id=v["id"],
            imsi=v["imsi"],
            cell=v["cell"],
            coverage_trace=[(int(t), float(loss)) for t, loss in v["coverage_trace"]],
            ue_category=UeCategory(v.get("ue_category", UeCategory.HIGH_CATEGORY.value)),
            restriction_supported=v.get("restriction_supported", False),
            ce_policy=v.get("ce_policy", "dynamic"),
            services=[_service(x) for x in v.get("services", [])],
            scripted_events=[ScriptedEvent(**e) for e in v.get("scripted_events", [])],
        )
        for v in doc["vehicles"]
    ]
    return Scenario(sim, radio, plmns, subs, vehicles, doc.get("name", ""))


def read_document(path: Union[str, Path]) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def validate(path: Union[str, Path]) -> list[Diagnostic]:
    try:
        doc = read_document(path)
    except (OSError, ValueError) as exc:
        return [Diagnostic(str(path), f"cannot read scenario: {exc}")]
    return validate_document(doc)


def load(path: Union[str, Path]) -> Scenario:
    return build(read_document(path))


DEMOS = ("garage-parked", "garage-parked-no-ce", "emergency", "roaming", "restricted")


def demo_path(name: str):
    if name not in DEMOS:
        raise KeyError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")
    return resources.files("cevsim") / "demos" / f"{name}.json"


def load_demo(name: str) -> Scenario:
    return build(json.loads(demo_path(name).read_text(encoding="utf-8")))
