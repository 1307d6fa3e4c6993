"""Telematics control unit: AT-command modem plus connection manager."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .protocol import (
    AttachAccept,
    AttachCommand,
    AttachState,
    AttachTimeout,
    CommandRejected,
    DetachCommand,
    Message,
    UeAttachState,
    UeCapabilities,
    UeCategory,
    ue_attach_fsm,
)
from .radio import DEFAULT_CONFIG, Coverage, LinkBudgetConfig, coverage_state

OK = "OK"
ERROR = "ERROR"


class QoS(str, enum.Enum):
    LOW_RATE = "LowRate"
    HIGH_RATE = "HighRate"


@dataclass(frozen=True)
class Periodic:
    period_s: float
    payload_subframes: int = 1

    @property
    def period_ms(self) -> int:
        return round(self.period_s * 1000)


@dataclass(frozen=True)
class OnDemand:
    payload_subframes: int = 1


@dataclass
class ServiceDescriptor:
    name: str
    qos: QoS = QoS.LOW_RATE
    traffic: Union[Periodic, OnDemand] = field(default_factory=OnDemand)
    active: bool = True
    direction: str = "uplink"

    @property
    def high_rate(self) -> bool:
        return self.qos is QoS.HIGH_RATE


class ModemHost:
    """Callbacks from a modem into its surroundings. The default does nothing."""

    def send(self, msg: Message) -> None:
        pass

    def schedule_attach_timeout(self, attempt: int) -> None:
        pass

    def log(self, category: str, detail: str) -> None:
        pass

    def network_supports_ce(self, category: UeCategory) -> bool:
        return True


class Modem:
    """UE modem with a line-oriented AT command interface.

    Besides the standard ``AT+CGATT`` attach control the modem implements two
    vendor commands: ``AT+VCECAP`` reads or writes the CE mode A capability
    bit and ``AT+VCPL?`` reports the last measured coupling loss.
    """

    _SET_CGATT = re.compile(r"^AT\+CGATT=([01])$")
    _SET_VCECAP = re.compile(r"^AT\+VCECAP=([01])$")

    def __init__(self, imsi: str, caps: UeCapabilities, host: Optional[ModemHost] = None):
        self.imsi = imsi
        self.caps = caps
        self.attach = UeAttachState()
        self.last_coupling_loss = 0.0
        self.host = host or ModemHost()
        self.attaches = 0
        self.detaches = 0
        self.attach_failures = 0

    @property
    def attached(self) -> bool:
        return self.attach.state is AttachState.ATTACHED

    def at_command(self, line: str) -> str:
        return "\r\n".join(self.command(line))

    def command(self, line: str) -> list[str]:
        cmd = line.strip("\r\n")
        response = self._dispatch(cmd)
        self.host.log("at", f"{cmd} -> {' | '.join(response)}")
        return response

    def _dispatch(self, cmd: str) -> list[str]:
        if cmd == "AT":
            return [OK]
        if cmd == "AT+CGATT?":
            return [f"+CGATT: {int(self.attached)}", OK]
        if cmd == "AT+VCECAP?":
            return [f"+VCECAP: {int(self.caps.ce_mode_a_supported)}", OK]
        if cmd == "AT+VCPL?":
            return [f"+VCPL: {self.last_coupling_loss:.1f}", OK]
        m = self._SET_CGATT.match(cmd)
        if m:
            event = AttachCommand() if m.group(1) == "1" else DetachCommand()
            try:
                self._step(event)
            except CommandRejected:
                return [ERROR]
            return [OK]
        m = self._SET_VCECAP.match(cmd)
        if m:
            supported = m.group(1) == "1"
            # capability changes only take network effect through a fresh attach
            if self.attach.state is not AttachState.DETACHED:
                return [ERROR]
            if not supported and self.caps.ue_category is UeCategory.CAT_M1:
                return [ERROR]
            self.caps = self.caps.with_ce(supported)
            return [OK]
        return [ERROR]

    def receive(self, msg: Message) -> None:
        """Handle a downlink control message; raises ProtocolViolation on misuse."""
        self._step(msg)

    def attach_timeout(self, attempt: int) -> None:
        self._step(AttachTimeout(attempt))

    def _step(self, event) -> None:
        before = self.attach.state
        step = ue_attach_fsm(
            self.attach,
            event,
            imsi=self.imsi,
            caps=self.caps,
            network_supports_ce=self.host.network_supports_ce(self.caps.ue_category),
        )
        self.attach = step.state
        for note in step.notes:
            self.host.log("modem", note)
            if note in ("AttachTimeout", "AttachRejected"):
                self.attach_failures += 1
        if isinstance(event, DetachCommand) and before is not AttachState.DETACHED:
            self.detaches += 1
        if "ImplicitDetach" in step.notes:
            self.detaches += 1
        if isinstance(event, AttachAccept):
            self.attaches += 1
            self.host.log(
                "modem",
                f"Attached ce_active={int(self.attach.ce_active)} ecr={self.attach.ecr_received}",
            )
        for msg in step.emitted:
            self.host.send(msg)
        if isinstance(event, AttachCommand):
            self.host.schedule_attach_timeout(self.attach.attempt)


class ProcedureStatus(str, enum.Enum):
    COMPLETED = "Completed"
    COMPLETED_NO_OP = "CompletedNoOp"
    ABORTED_HIGH_RATE_SERVICE = "AbortedHighRateService"
    ABORTED_ALREADY_ENABLED = "AbortedAlreadyEnabled"
    FAILED = "ProcedureFailed"


@dataclass
class ProcedureResult:
    procedure: str
    status: ProcedureStatus
    commands: list[str] = field(default_factory=list)
    # procedure step number of the failing command; 0 is the implicit detach
    failed_step: Optional[int] = None


class ServiceRejected(ValueError):
    pass


class _StepFailed(Exception):
    def __init__(self, step: int):
        self.step = step


class ConnectionManager:
    """Decides when the modem should declare CE mode A.

    ``ce_policy`` is ``"dynamic"`` for the enable/disable behaviour or
    ``"never"`` to keep CE off (useful as a baseline).
    """

    def __init__(
        self,
        modem: Modem,
        cfg: LinkBudgetConfig = DEFAULT_CONFIG,
        services=(),
        ce_policy: str = "dynamic",
        keep_connected: bool = True,
    ):
        self.modem = modem
        self.cfg = cfg
        self.ce_policy = ce_policy
        self.keep_connected = keep_connected
        self.coverage = Coverage.NORMAL
        self.services: dict[str, ServiceDescriptor] = {}
        self.modem_ce_flag_shadow = modem.caps.ce_mode_a_supported
        self.results: list[ProcedureResult] = []
        for svc in services:
            self.register_service(svc)

    # -- service registry -------------------------------------------------

    def register_service(self, svc: ServiceDescriptor) -> None:
        if svc.name in self.services:
            raise ServiceRejected(f"duplicate service name {svc.name!r}")
        self.services[svc.name] = svc

    def high_rate_active(self) -> bool:
        return any(s.active and s.high_rate for s in self.services.values())

    def activate_service(self, name: str) -> Optional[ProcedureResult]:
        svc = self.services[name]
        if svc.active:
            return None
        svc.active = True
        if svc.high_rate:
            return self.disable_ce_procedure()
        return None

    def deactivate_service(self, name: str) -> Optional[ProcedureResult]:
        svc = self.services[name]
        if not svc.active:
            return None
        svc.active = False
        if (
            svc.high_rate
            and not self.high_rate_active()
            and self.coverage is Coverage.EXTENDED
            and self.ce_policy == "dynamic"
        ):
            return self.enable_ce_procedure()
        return None

    # -- coverage monitoring -----------------------------------------------

    def poll_coupling_loss(self) -> float:
        lines = self.modem.command("AT+VCPL?")
        return float(lines[0].split(":", 1)[1])

    def on_coverage_sample(self, loss: Optional[float] = None) -> Optional[ProcedureResult]:
        """Re-evaluate coverage. Without ``loss`` the modem is polled."""
        if loss is None:
            loss = self.poll_coupling_loss()
        previous = self.coverage
        self.coverage = coverage_state(loss, previous, self.cfg)
        result = None
        if self.ce_policy == "dynamic":
            if previous is Coverage.NORMAL and self.coverage is Coverage.EXTENDED:
                result = self.enable_ce_procedure()
            elif previous is Coverage.EXTENDED and self.coverage is Coverage.NORMAL and self.modem_ce_flag_shadow:
                result = self._run("restore", self._detach_clear_attach)
        if result is None and self.keep_connected and self.modem.attach.state is AttachState.DETACHED:
            self._issue("AT+CGATT=1", [], 0)
        return result

    # -- procedures ----------------------------------------------------------

    def enable_ce_procedure(self) -> ProcedureResult:
        if self.high_rate_active():
            return self._record(ProcedureResult("enable", ProcedureStatus.ABORTED_HIGH_RATE_SERVICE))
        if self.modem_ce_flag_shadow and self.modem.attach.state is not AttachState.DETACHED:
            return self._record(ProcedureResult("enable", ProcedureStatus.ABORTED_ALREADY_ENABLED))

        def steps(issued):
            if self.modem.attach.state is not AttachState.DETACHED:
                self.modem.host.log("procedure", "enable ImplicitDetach")
                self._issue("AT+CGATT=0", issued, 0)
            self._issue("AT+VCECAP=1", issued, 3)
            self._issue("AT+CGATT=1", issued, 4)

        return self._run("enable", steps)

    def disable_ce_procedure(self) -> ProcedureResult:
        if not self.modem_ce_flag_shadow:
            return self._record(ProcedureResult("disable", ProcedureStatus.COMPLETED_NO_OP))
        return self._run("disable", self._detach_clear_attach)

    def _detach_clear_attach(self, issued):
        self._issue("AT+CGATT=0", issued, 3)
        self._issue("AT+VCECAP=0", issued, 4)
        self._issue("AT+CGATT=1", issued, 5)

    def _run(self, name, steps) -> ProcedureResult:
        self.modem.host.log("procedure", f"{name} start")
        issued: list[str] = []
        try:
            steps(issued)
        except _StepFailed as exc:
            return self._record(ProcedureResult(name, ProcedureStatus.FAILED, issued, exc.step))
        return self._record(ProcedureResult(name, ProcedureStatus.COMPLETED, issued))

    def _issue(self, cmd: str, issued: list[str], step: int) -> None:
        issued.append(cmd)
        response = self.modem.command(cmd)
        if response[-1] != OK:
            raise _StepFailed(step)
        if cmd.startswith("AT+VCECAP="):
            self.modem_ce_flag_shadow = cmd.endswith("1")

    def _record(self, result: ProcedureResult) -> ProcedureResult:
        self.results.append(result)
        self.modem.host.log("procedure", f"{result.procedure} {result.status.value}")
        return result
