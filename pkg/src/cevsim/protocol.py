"""Simplified RRC, NAS, S1-AP and Diameter S6a signaling.

Only the fields touched by the CE capability and Enhanced Coverage Restricted
flows are modeled. There is no ASN.1 or AVP encoding; messages are plain
frozen dataclasses that travel over simulated links.

Network nodes (eNB, MME, HSS) are single-owner objects whose ``handle`` method
consumes one message and returns the messages to send as ``(destination,
message)`` pairs. The UE side is a pure transition function.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from typing import Callable, ClassVar, Optional


class ProtocolViolation(Exception):
    """A message arrived that the receiving state machine cannot accept."""


class CommandRejected(Exception):
    """A local command (attach/detach) is not allowed in the current state."""


class RoutingFailure(LookupError):
    pass


class UeCategory(str, enum.Enum):
    CAT_M1 = "CatM1"
    HIGH_CATEGORY = "HighCategory"


@dataclass(frozen=True)
class UeCapabilities:
    ce_mode_a_supported: bool = False
    restriction_supported: bool = False
    ue_category: UeCategory = UeCategory.HIGH_CATEGORY

    def __post_init__(self):
        # CE mode A is mandatory for Cat-M1
        if self.ue_category is UeCategory.CAT_M1 and not self.ce_mode_a_supported:
            raise ValueError("CatM1 UEs always support CE mode A")

    def with_ce(self, supported: bool) -> "UeCapabilities":
        return replace(self, ce_mode_a_supported=supported)


# Destination placeholder for "the UE named by the message's IMSI".
UE = "<ue>"


@dataclass(frozen=True)
class Message:
    protocol: ClassVar[str] = ""
    imsi: str

    def __str__(self):
        args = ", ".join(
            f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self) if f.name != "imsi"
        )
        return f"{self.protocol} {type(self).__name__}({args})"


def _fmt(value):
    if isinstance(value, UeCapabilities):
        return "caps(ce={:d},restr={:d},{})".format(
            value.ce_mode_a_supported, value.restriction_supported, value.ue_category.value
        )
    if isinstance(value, enum.Enum):
        return value.value
    return repr(value) if isinstance(value, str) else str(value)


# RRC, UE <-> eNB
@dataclass(frozen=True)
class ConnectionRequest(Message):
    protocol = "RRC"


@dataclass(frozen=True)
class UECapabilityEnquiry(Message):
    protocol = "RRC"


@dataclass(frozen=True)
class UECapabilityInformation(Message):
    protocol = "RRC"
    caps: UeCapabilities = field(default_factory=UeCapabilities)


@dataclass(frozen=True)
class ConnectionRelease(Message):
    protocol = "RRC"


# NAS, UE <-> MME (relayed by the eNB)
@dataclass(frozen=True)
class AttachRequest(Message):
    protocol = "NAS"
    caps: UeCapabilities = field(default_factory=UeCapabilities)


@dataclass(frozen=True)
class AttachAccept(Message):
    protocol = "NAS"
    ecr: Optional[bool] = None


@dataclass(frozen=True)
class AttachReject(Message):
    protocol = "NAS"
    cause: str = ""


@dataclass(frozen=True)
class DetachRequest(Message):
    protocol = "NAS"


@dataclass(frozen=True)
class DetachAccept(Message):
    protocol = "NAS"


# S1-AP, eNB <-> MME
@dataclass(frozen=True)
class InitialUeMessage(Message):
    protocol = "S1AP"
    caps: UeCapabilities = field(default_factory=UeCapabilities)


@dataclass(frozen=True)
class UeContextSetup(Message):
    protocol = "S1AP"
    ecr: Optional[bool] = None


@dataclass(frozen=True)
class UeContextRelease(Message):
    protocol = "S1AP"


# Diameter S6a, MME <-> HSS
@dataclass(frozen=True)
class UpdateLocationRequest(Message):
    protocol = "Diameter"
    visited_plmn: str = ""


DIAMETER_SUCCESS = "DIAMETER_SUCCESS"
DIAMETER_ERROR_USER_UNKNOWN = "DIAMETER_ERROR_USER_UNKNOWN"


@dataclass(frozen=True)
class UpdateLocationAnswer(Message):
    protocol = "Diameter"
    enhanced_coverage_restricted: Optional[bool] = None
    result: str = DIAMETER_SUCCESS


# Opaque application payloads
@dataclass(frozen=True)
class UplinkData(Message):
    protocol = "App"
    payload_subframes: int = 1
    service: str = ""


@dataclass(frozen=True)
class DownlinkData(Message):
    protocol = "App"
    payload_subframes: int = 1
    service: str = ""


NAS_DOWNLINK = (AttachAccept, AttachReject, DetachAccept)
NAS_UPLINK = (AttachRequest, DetachRequest)


# ---------------------------------------------------------------------------
# UE attach state machine


class AttachState(str, enum.Enum):
    DETACHED = "Detached"
    ATTACHING = "Attaching"
    ATTACHED = "Attached"


@dataclass(frozen=True)
class AttachCommand:
    pass


@dataclass(frozen=True)
class DetachCommand:
    pass


@dataclass(frozen=True)
class AttachTimeout:
    attempt: int


@dataclass(frozen=True)
class UeAttachState:
    state: AttachState = AttachState.DETACHED
    ce_active: bool = False
    ecr_received: Optional[bool] = None
    attempt: int = 0

    @property
    def restricted(self) -> bool:
        # allowed unless the network explicitly said otherwise
        return self.ecr_received is True


@dataclass(frozen=True)
class UeStep:
    state: UeAttachState
    emitted: tuple = ()
    notes: tuple = ()


def ue_attach_fsm(
    state: UeAttachState,
    event,
    *,
    imsi: str,
    caps: UeCapabilities,
    network_supports_ce: bool = True,
) -> UeStep:
    """Advance the UE side of attach/detach by one event.

    ``network_supports_ce`` says whether the serving network can run CE mode A
    for this UE's category.
    """
    s = state.state
    if isinstance(event, AttachCommand):
        if s is AttachState.ATTACHING:
            raise CommandRejected("attach already in progress")
        notes = ("ImplicitDetach",) if s is AttachState.ATTACHED else ()
        new = UeAttachState(AttachState.ATTACHING, False, None, state.attempt + 1)
        return UeStep(new, (ConnectionRequest(imsi),), notes)

    if isinstance(event, DetachCommand):
        if s is AttachState.DETACHED:
            return UeStep(state, (), ("AlreadyDetached",))
        detached = UeAttachState(AttachState.DETACHED, False, None, state.attempt)
        if s is AttachState.ATTACHING:
            return UeStep(detached, (), ("AttachAborted",))
        # local detach completes immediately; a late DetachAccept is absorbed
        return UeStep(detached, (DetachRequest(imsi),))

    if isinstance(event, AttachTimeout):
        if s is AttachState.ATTACHING and event.attempt == state.attempt:
            return UeStep(UeAttachState(AttachState.DETACHED, attempt=state.attempt), (), ("AttachTimeout",))
        return UeStep(state)

    if isinstance(event, UECapabilityEnquiry):
        if s is not AttachState.ATTACHING:
            raise ProtocolViolation(f"UECapabilityEnquiry in state {s.value}")
        return UeStep(state, (UECapabilityInformation(imsi, caps), AttachRequest(imsi, caps)))

    if isinstance(event, AttachAccept):
        if s is not AttachState.ATTACHING:
            raise ProtocolViolation(f"AttachAccept in state {s.value}")
        restricted = event.ecr is True
        ce_active = caps.ce_mode_a_supported and network_supports_ce and not restricted
        return UeStep(UeAttachState(AttachState.ATTACHED, ce_active, event.ecr, state.attempt))

    if isinstance(event, AttachReject):
        if s is not AttachState.ATTACHING:
            raise ProtocolViolation(f"AttachReject in state {s.value}")
        return UeStep(UeAttachState(AttachState.DETACHED, attempt=state.attempt), (), ("AttachRejected",))

    if isinstance(event, DetachAccept):
        if s is AttachState.ATTACHED:
            return UeStep(UeAttachState(AttachState.DETACHED, attempt=state.attempt))
        return UeStep(state)

    if isinstance(event, ConnectionRelease):
        return UeStep(state)

    raise ProtocolViolation(f"UE cannot handle {event}")


# ---------------------------------------------------------------------------
# eNB


@dataclass
class EnbUeContext:
    caps: Optional[UeCapabilities] = None
    restricted: bool = False
    attached: bool = False


class EnbNode:
    """Radio-side anchor of a cell: capability store and NAS relay."""

    def __init__(self, node_id: str, plmn_id: str, mme_id: str):
        self.node_id = node_id
        self.plmn_id = plmn_id
        self.mme_id = mme_id
        self.contexts: dict[str, EnbUeContext] = {}
        # restriction learned from the MME outlives individual RRC connections
        self.restricted: dict[str, bool] = {}

    def context(self, imsi: str) -> EnbUeContext:
        try:
            return self.contexts[imsi]
        except KeyError:
            raise ProtocolViolation(f"{self.node_id}: no UE context for {imsi}") from None

    def handle(self, msg: Message, src: str) -> list[tuple[str, Message]]:
        imsi = msg.imsi
        if isinstance(msg, ConnectionRequest):
            # first contact always enquires; any older context is replaced
            self.contexts[imsi] = EnbUeContext(restricted=self.restricted.get(imsi, False))
            return [(UE, UECapabilityEnquiry(imsi))]
        if isinstance(msg, UECapabilityInformation):
            self.context(imsi).caps = msg.caps
            return [(self.mme_id, InitialUeMessage(imsi, msg.caps))]
        if isinstance(msg, NAS_UPLINK):
            self.context(imsi)
            return [(self.mme_id, msg)]
        if isinstance(msg, UeContextSetup):
            ctx = self.context(imsi)
            ctx.restricted = self.restricted[imsi] = msg.ecr is True
            ctx.attached = True
            return []
        if isinstance(msg, NAS_DOWNLINK):
            return [(UE, msg)]
        if isinstance(msg, UeContextRelease):
            self.contexts.pop(imsi, None)
            return [(UE, ConnectionRelease(imsi))]
        raise ProtocolViolation(f"{self.node_id} cannot handle {msg}")


# ---------------------------------------------------------------------------
# MME


@dataclass
class MmeUeContext:
    enb: str
    caps: UeCapabilities
    attach_requested: bool = False
    answer: Optional[UpdateLocationAnswer] = None
    routing_error: Optional[str] = None
    ecr_sent: Optional[bool] = None
    attached: bool = False


class MmeNode:
    def __init__(self, node_id: str, plmn_id: str, resolve_hss: Callable[[str], str]):
        self.node_id = node_id
        self.plmn_id = plmn_id
        self.resolve_hss = resolve_hss
        self.contexts: dict[str, MmeUeContext] = {}

    def handle(self, msg: Message, src: str) -> list[tuple[str, Message]]:
        imsi = msg.imsi
        if isinstance(msg, InitialUeMessage):
            ctx = MmeUeContext(enb=src, caps=msg.caps)
            self.contexts[imsi] = ctx
            try:
                hss = self.resolve_hss(imsi)
            except RoutingFailure as exc:
                ctx.routing_error = str(exc)
                return self._maybe_complete(imsi, ctx)
            return [(hss, UpdateLocationRequest(imsi, self.plmn_id))]

        ctx = self.contexts.get(imsi)
        if ctx is None:
            raise ProtocolViolation(f"{self.node_id}: no UE context for {imsi}")
        if isinstance(msg, AttachRequest):
            if msg.caps != ctx.caps:
                raise ProtocolViolation(f"{self.node_id}: AttachRequest caps differ from InitialUeMessage")
            ctx.attach_requested = True
            return self._maybe_complete(imsi, ctx)
        if isinstance(msg, UpdateLocationAnswer):
            ctx.answer = msg
            return self._maybe_complete(imsi, ctx)
        if isinstance(msg, DetachRequest):
            del self.contexts[imsi]
            return [(ctx.enb, DetachAccept(imsi)), (ctx.enb, UeContextRelease(imsi))]
        raise ProtocolViolation(f"{self.node_id} cannot handle {msg}")

    def _maybe_complete(self, imsi: str, ctx: MmeUeContext) -> list[tuple[str, Message]]:
        if not ctx.attach_requested or ctx.attached:
            return []
        if ctx.routing_error is not None:
            del self.contexts[imsi]
            return [(ctx.enb, AttachReject(imsi, "RoutingFailure"))]
        if ctx.answer is None:
            return []
        if ctx.answer.result != DIAMETER_SUCCESS:
            del self.contexts[imsi]
            return [(ctx.enb, AttachReject(imsi, ctx.answer.result))]
        restricted = bool(ctx.answer.enhanced_coverage_restricted)
        # only a UE that declared restriction support is told about it
        ecr = restricted if ctx.caps.restriction_supported else None
        ctx.ecr_sent = ecr
        ctx.attached = True
        # the eNB always learns about a restricted subscription so it can enforce it
        s1_ecr = ecr if ecr is not None else (True if restricted else None)
        return [(ctx.enb, UeContextSetup(imsi, s1_ecr)), (ctx.enb, AttachAccept(imsi, ecr))]


# ---------------------------------------------------------------------------
# HSS


class HssNode:
    def __init__(self, node_id: str, subscriptions: dict[str, bool]):
        self.node_id = node_id
        # imsi -> enhanced_coverage_restricted
        self.subscriptions = dict(subscriptions)

    def handle(self, msg: Message, src: str) -> list[tuple[str, Message]]:
        if not isinstance(msg, UpdateLocationRequest):
            raise ProtocolViolation(f"{self.node_id} cannot handle {msg}")
        if msg.imsi not in self.subscriptions:
            return [(src, UpdateLocationAnswer(msg.imsi, None, DIAMETER_ERROR_USER_UNKNOWN))]
        return [(src, UpdateLocationAnswer(msg.imsi, self.subscriptions[msg.imsi]))]
