"""Deterministic discrete-event engine tying vehicles and the network together.

Events are ordered by ``(time, seq)`` with integer millisecond time; ``seq``
is assigned when an event is scheduled. Core links (S1-AP, Diameter,
backhaul) are reliable with fixed latency. The radio link (Uu) applies the
link budget to every message and adds one millisecond of airtime per
transmitted subframe.
"""
from __future__ import annotations

import copy
import csv
import heapq
import io
import random
from dataclasses import dataclass, field
from typing import Any, Optional

from .network import (
    CellResourceLedger,
    Network,
    ce_repetitions_permitted,
    choose_repetitions,
    schedule_transmission,
)
from .protocol import (
    UE,
    DownlinkData,
    Message,
    ProtocolViolation,
    UeCapabilities,
    UeCategory,
    UplinkData,
)
from .radio import TransmissionOutcome, evaluate_transmission
from .scenario import Scenario, ScriptedEvent, VehicleSpec
from .vehicle import ConnectionManager, Modem, ModemHost, Periodic, ProcedureResult

CLOUD = "cloud"
SIM = "sim"

MESSAGE_DELIVERY = "MessageDelivery"
TRACE_SAMPLE = "TraceSample"
TRAFFIC_DUE = "TrafficDue"
TIMER_FIRE = "TimerFire"


class InternalError(RuntimeError):
    pass


@dataclass(order=True, frozen=True)
class SimEvent:
    time: int
    seq: int
    kind: str = field(compare=False)
    target: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


@dataclass(frozen=True)
class LogRecord:
    time: int
    node: str
    category: str
    detail: str


class EventLog:
    COLUMNS = ("time_ms", "node", "category", "detail")

    def __init__(self):
        self.records: list[LogRecord] = []

    def append(self, time: int, node: str, category: str, detail: str) -> None:
        self.records.append(LogRecord(time, node, category, detail))

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def filter(self, category: Optional[str] = None, node: Optional[str] = None) -> list[LogRecord]:
        return [
            r
            for r in self.records
            if (category is None or r.category == category) and (node is None or r.node == node)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.records:
            writer.writerow((r.time, r.node, r.category, r.detail))
        return buf.getvalue()


@dataclass
class ServiceMetrics:
    attempted: int = 0
    delivered: int = 0
    failed_detached: int = 0

    @property
    def delivery_ratio(self) -> float:
        # nothing attempted counts as nothing delivered
        return self.delivered / self.attempted if self.attempted else 0.0

    def to_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "delivered": self.delivered,
            "failed_detached": self.failed_detached,
            "delivery_ratio": self.delivery_ratio,
        }


@dataclass
class VehicleMetrics:
    time_in_ce_ms: int = 0
    attaches: int = 0
    detaches: int = 0
    attach_failures: int = 0


@dataclass
class Metrics:
    services: dict[str, ServiceMetrics] = field(default_factory=dict)
    cells: dict[str, CellResourceLedger] = field(default_factory=dict)
    vehicles: dict[str, VehicleMetrics] = field(default_factory=dict)
    procedures: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "services": {k: v.to_dict() for k, v in self.services.items()},
            "cells": {k: v.to_dict() for k, v in self.cells.items()},
            "vehicles": {k: vars(v).copy() for k, v in self.vehicles.items()},
            "procedures": dict(self.procedures),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(
            services={
                k: ServiceMetrics(v["attempted"], v["delivered"], v["failed_detached"])
                for k, v in d["services"].items()
            },
            cells={k: CellResourceLedger.from_dict(v) for k, v in d["cells"].items()},
            vehicles={k: VehicleMetrics(**v) for k, v in d["vehicles"].items()},
            procedures=dict(d["procedures"]),
        )


@dataclass(frozen=True)
class ScheduledTransmission:
    """One data transmission decided by a cell scheduler."""

    time: int
    cell: str
    imsi: str
    direction: str
    outcome: TransmissionOutcome


class _VehicleHost(ModemHost):
    def __init__(self, sim: "Simulation", vehicle: "VehicleRuntime"):
        self.sim = sim
        self.vehicle = vehicle

    def send(self, msg: Message) -> None:
        self.sim.send(self.vehicle.id, self.vehicle.cell_id, msg)

    def schedule_attach_timeout(self, attempt: int) -> None:
        self.sim.schedule(self.sim.settings.attach_timeout_ms, TIMER_FIRE, self.vehicle.id, ("attach_timeout", attempt))

    def log(self, category: str, detail: str) -> None:
        self.sim.log(self.vehicle.id, category, detail)

    def network_supports_ce(self, category) -> bool:
        return self.sim.network.plmn_of_cell(self.vehicle.cell_id).ce_allowed_for(category)


class VehicleRuntime:
    def __init__(self, sim: "Simulation", spec: VehicleSpec):
        self.id = spec.id
        self.imsi = spec.imsi
        self.cell_id = spec.cell
        self.spec = spec
        caps = UeCapabilities(
            ce_mode_a_supported=spec.ue_category is UeCategory.CAT_M1,
            restriction_supported=spec.restriction_supported,
            ue_category=spec.ue_category,
        )
        self.modem = Modem(spec.imsi, caps, _VehicleHost(sim, self))
        self.cm = ConnectionManager(self.modem, sim.cfg, spec.services, spec.ce_policy)
        self.ce_since: Optional[int] = None
        self.time_in_ce_ms = 0

    @property
    def loss(self) -> float:
        return self.modem.last_coupling_loss


class Simulation:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        # services are mutated during a run; keep the caller's scenario pristine
        self.scenario = copy.deepcopy(scenario)
        self.settings = self.scenario.sim
        self.latencies = self.settings.latencies
        self.cfg = self.scenario.radio
        self.seed = self.settings.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.network = Network(self.scenario.plmns, self.scenario.subscriptions)
        self.now = 0
        self._seq = 0
        self._queue: list[SimEvent] = []
        self.event_log = EventLog()
        self.metrics = Metrics()
        self.transmissions: list[ScheduledTransmission] = []
        self.procedures: list[tuple[int, str, ProcedureResult]] = []
        self.vehicles: dict[str, VehicleRuntime] = {}
        self._by_imsi: dict[str, VehicleRuntime] = {}
        for spec in self.scenario.vehicles:
            v = VehicleRuntime(self, spec)
            self.vehicles[v.id] = v
            self._by_imsi[v.imsi] = v
            for svc in spec.services:
                self.metrics.services[f"{v.id}/{svc.name}"] = ServiceMetrics()
            self.metrics.vehicles[v.id] = VehicleMetrics()

    # -- scheduling ------------------------------------------------------------

    def schedule(self, delay: int, kind: str, target: str, payload=None) -> SimEvent:
        return self.schedule_at(self.now + delay, kind, target, payload)

    def schedule_at(self, time: int, kind: str, target: str, payload=None) -> SimEvent:
        if time < self.now:
            raise InternalError(f"event {kind} for {target} scheduled at {time} < now {self.now}")
        self._seq += 1
        event = SimEvent(int(time), self._seq, kind, target, payload)
        heapq.heappush(self._queue, event)
        return event

    def log(self, node: str, category: str, detail: str) -> None:
        self.event_log.append(self.now, node, category, detail)

    # -- message transport ----------------------------------------------------

    def _link_latency(self, src: str, dst: str) -> Optional[int]:
        net = self.network
        if src in net.cells and dst == CLOUD or src == CLOUD and dst in net.cells:
            return self.latencies.backhaul_ms
        if src in net.cells and dst in net.mmes:
            return self.latencies.s1_ms if net.cells[src].plmn.mme == dst else None
        if src in net.mmes and dst in net.cells:
            return self.latencies.s1_ms if net.cells[dst].plmn.mme == src else None
        if src in net.mmes and dst in net.hsss or src in net.hsss and dst in net.mmes:
            return self.latencies.diameter_ms
        return None

    def send(self, src: str, dst: str, msg: Message) -> Optional[SimEvent]:
        """Put ``msg`` on the link from ``src`` to ``dst``.

        ``dst`` may be ``UE`` when a cell addresses the UE named by the message.
        """
        if dst == UE:
            vehicle = self._by_imsi.get(msg.imsi)
            if vehicle is None or vehicle.cell_id != src:
                self.log(src, "drop", f"MessageDropped no UE {msg.imsi} in cell: {msg}")
                return None
            return self._send_uu(src, vehicle, msg, downlink=True)
        if src in self.vehicles:
            vehicle = self.vehicles[src]
            if dst != vehicle.cell_id:
                self.log(src, "drop", f"MessageDropped no link {src}->{dst}: {msg}")
                return None
            return self._send_uu(dst, vehicle, msg, downlink=False)
        latency = self._link_latency(src, dst)
        if latency is None:
            self.log(src, "drop", f"MessageDropped no link {src}->{dst}: {msg}")
            return None
        return self.schedule(latency, MESSAGE_DELIVERY, dst, (src, msg))

    def _send_uu(self, cell_id: str, vehicle: VehicleRuntime, msg: Message, downlink: bool):
        cell = self.network.cells[cell_id]
        src, dst = (cell_id, vehicle.id) if downlink else (vehicle.id, cell_id)
        if isinstance(msg, (UplinkData, DownlinkData)):
            ctx = cell.ue_context(vehicle.imsi, vehicle.loss)
            if ctx is None:
                self.log(src, "drop", f"MessageDropped no UE context: {msg}")
                return None
            outcome = schedule_transmission(cell, ctx, msg.payload_subframes, self.cfg)
            self.transmissions.append(
                ScheduledTransmission(self.now, cell_id, vehicle.imsi, "downlink" if downlink else "uplink", outcome)
            )
            if outcome.delivered:
                self.metrics.services[f"{vehicle.id}/{msg.service}"].delivered += 1
        else:
            restricted = vehicle.modem.attach.restricted or cell.enb.restricted.get(vehicle.imsi, False)
            permitted = ce_repetitions_permitted(vehicle.modem.caps, restricted, cell.plmn)
            reps, _ = choose_repetitions(vehicle.loss, permitted, self.cfg)
            outcome = evaluate_transmission(vehicle.loss, reps, 1, self.cfg)
        if not outcome.delivered:
            self.log(src, "drop", f"MessageDropped link budget loss={vehicle.loss:.1f} reps={outcome.reps_used}: {msg}")
            return None
        delay = self.latencies.uu_ms + outcome.airtime_ms
        return self.schedule(delay, MESSAGE_DELIVERY, dst, (src, msg, outcome.reps_used))

    # -- event handlers --------------------------------------------------------

    def _deliver(self, event: SimEvent) -> None:
        src, msg, *rest = event.payload
        reps = f" reps={rest[0]}" if rest else ""
        target = event.target
        self.log(target, "msg", f"{src} -> {target}{reps}: {msg}")
        if target == CLOUD:
            return
        if target in self.vehicles:
            vehicle = self.vehicles[target]
            if isinstance(msg, DownlinkData):
                return
            try:
                vehicle.modem.receive(msg)
            except ProtocolViolation as exc:
                self.log(target, "violation", str(exc))
            return
        cell = self.network.cells.get(target)
        if cell is not None and isinstance(msg, UplinkData):
            self.send(target, CLOUD, msg)
            return
        if cell is not None and isinstance(msg, DownlinkData):
            self.send(target, UE, msg)
            return
        node = self.network.node(target)
        try:
            out = node.handle(msg, src)
        except ProtocolViolation as exc:
            self.log(target, "violation", str(exc))
            return
        for dst, m in out:
            self.send(target, dst, m)

    def _trace_sample(self, vehicle: VehicleRuntime, loss: float) -> None:
        vehicle.modem.last_coupling_loss = loss
        self.log(vehicle.id, "coverage", f"loss={loss:.1f}")
        self._note(vehicle, vehicle.cm.on_coverage_sample())

    def _traffic_due(self, vehicle: VehicleRuntime, name: str, periodic: bool) -> None:
        svc = vehicle.cm.services[name]
        if periodic:
            self.schedule(svc.traffic.period_ms, TRAFFIC_DUE, vehicle.id, (name, True))
        if not svc.active:
            return
        stats = self.metrics.services[f"{vehicle.id}/{name}"]
        if not vehicle.modem.attached:
            stats.failed_detached += 1
            self.log(vehicle.id, "traffic", f"{name} not attached")
            return
        stats.attempted += 1
        payload = svc.traffic.payload_subframes
        self.log(vehicle.id, "traffic", f"{name} {svc.direction} payload={payload}")
        if svc.direction == "downlink":
            self.send(CLOUD, vehicle.cell_id, DownlinkData(vehicle.imsi, payload, name))
        else:
            self.send(vehicle.id, vehicle.cell_id, UplinkData(vehicle.imsi, payload, name))

    def _timer(self, vehicle: VehicleRuntime, payload) -> None:
        if isinstance(payload, ScriptedEvent):
            self._scripted(vehicle, payload)
            return
        kind, attempt = payload
        if kind == "attach_timeout":
            vehicle.modem.attach_timeout(attempt)

    def _scripted(self, vehicle: VehicleRuntime, ev: ScriptedEvent) -> None:
        self.log(vehicle.id, "script", f"{ev.action} {ev.service or ev.command or ''}".rstrip())
        cm = vehicle.cm
        if ev.action == "activate_service":
            self._note(vehicle, cm.activate_service(ev.service))
        elif ev.action == "deactivate_service":
            self._note(vehicle, cm.deactivate_service(ev.service))
        elif ev.action == "send":
            self._traffic_due(vehicle, ev.service, periodic=False)
        elif ev.action == "at_command":
            vehicle.modem.command(ev.command)

    def _note(self, vehicle: VehicleRuntime, result: Optional[ProcedureResult]) -> None:
        if result is None:
            return
        self.procedures.append((self.now, vehicle.id, result))
        key = f"{result.procedure}:{result.status.value}"
        self.metrics.procedures[key] = self.metrics.procedures.get(key, 0) + 1

    def _track_ce(self) -> None:
        for v in self.vehicles.values():
            active = v.modem.attach.ce_active
            if active and v.ce_since is None:
                v.ce_since = self.now
            elif not active and v.ce_since is not None:
                v.time_in_ce_ms += self.now - v.ce_since
                v.ce_since = None

    # -- main loop -------------------------------------------------------------

    def _seed_events(self) -> None:
        for v in self.vehicles.values():
            for t, loss in v.spec.coverage_trace:
                self.schedule_at(t, TRACE_SAMPLE, v.id, loss)
            for svc in v.spec.services:
                if isinstance(svc.traffic, Periodic):
                    offset = self.rng.randint(0, self.settings.jitter_ms) if self.settings.jitter_ms else 0
                    self.schedule_at(svc.traffic.period_ms + offset, TRAFFIC_DUE, v.id, (svc.name, True))
            for ev in v.spec.scripted_events:
                self.schedule_at(ev.time, TIMER_FIRE, v.id, ev)

    def run(self) -> tuple[EventLog, Metrics]:
        end = self.settings.duration_ms
        self.log(SIM, "sim", "start")
        self._seed_events()
        while self._queue and self._queue[0].time <= end:
            event = heapq.heappop(self._queue)
            if event.time < self.now:
                raise InternalError(f"event queue out of order at {event}")
            self.now = event.time
            if event.kind == MESSAGE_DELIVERY:
                self._deliver(event)
            elif event.kind == TRACE_SAMPLE:
                self._trace_sample(self.vehicles[event.target], event.payload)
            elif event.kind == TRAFFIC_DUE:
                name, periodic = event.payload
                self._traffic_due(self.vehicles[event.target], name, periodic)
            elif event.kind == TIMER_FIRE:
                self._timer(self.vehicles[event.target], event.payload)
            else:
                raise InternalError(f"unknown event kind {event.kind}")
            self._track_ce()
        self.now = end
        self._track_ce()
        for v in self.vehicles.values():
            if v.ce_since is not None:
                v.time_in_ce_ms += end - v.ce_since
                v.ce_since = None
            vm = self.metrics.vehicles[v.id]
            vm.time_in_ce_ms = v.time_in_ce_ms
            vm.attaches = v.modem.attaches
            vm.detaches = v.modem.detaches
            vm.attach_failures = v.modem.attach_failures
        for cell_id, cell in self.network.cells.items():
            self.metrics.cells[cell_id] = cell.ledger.snapshot()
        self.log(SIM, "sim", "end")
        return self.event_log, self.metrics


def run(scenario: Scenario, seed: Optional[int] = None) -> tuple[EventLog, Metrics]:
    return Simulation(scenario, seed).run()
