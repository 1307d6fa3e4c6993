"""Mobile network topology, repetition-aware scheduling and S6a routing."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .protocol import EnbNode, HssNode, MmeNode, RoutingFailure, UeCapabilities, UeCategory
from .radio import (
    BeyondCeModeA,
    DEFAULT_CONFIG,
    LinkBudgetConfig,
    TransmissionOutcome,
    evaluate_transmission,
    required_repetitions,
)

IMSI_RE = re.compile(r"^\d{15}$")
PLMN_RE = re.compile(r"^\d{5,6}$")


@dataclass(frozen=True)
class SubscriptionRecord:
    imsi: str
    enhanced_coverage_restricted: bool = False

    def __post_init__(self):
        if not IMSI_RE.match(self.imsi):
            raise ValueError(f"IMSI must be 15 digits: {self.imsi!r}")


@dataclass(frozen=True)
class PlmnConfig:
    plmn_id: str
    supports_ce_mode_a_high_category: bool = True
    cells: tuple[str, ...] = ()
    mme: str = ""
    hss: Optional[str] = None

    def ce_allowed_for(self, category: UeCategory) -> bool:
        # Cat-M1 has CE mode A by definition; high categories need network support
        return category is UeCategory.CAT_M1 or self.supports_ce_mode_a_high_category


@dataclass
class CellResourceLedger:
    subframes_used: int = 0
    subframes_used_ce: int = 0
    transmissions: Counter = field(default_factory=Counter)

    def record(self, outcome: TransmissionOutcome) -> None:
        self.subframes_used += outcome.subframes
        if outcome.reps_used > 1:
            self.subframes_used_ce += outcome.subframes
        self.transmissions[outcome.reps_used] += 1

    def snapshot(self) -> "CellResourceLedger":
        return CellResourceLedger(self.subframes_used, self.subframes_used_ce, Counter(self.transmissions))

    def to_dict(self) -> dict:
        return {
            "subframes_used": self.subframes_used,
            "subframes_used_ce": self.subframes_used_ce,
            "transmissions": {str(r): n for r, n in sorted(self.transmissions.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellResourceLedger":
        return cls(
            d["subframes_used"],
            d["subframes_used_ce"],
            Counter({int(r): n for r, n in d["transmissions"].items()}),
        )


@dataclass(frozen=True)
class UeRadioContext:
    """What the scheduler knows about one UE at transmission time."""

    imsi: str
    caps: Optional[UeCapabilities]
    restricted: bool
    loss: float


class Cell:
    def __init__(self, cell_id: str, plmn: PlmnConfig):
        self.cell_id = cell_id
        self.plmn = plmn
        self.enb = EnbNode(cell_id, plmn.plmn_id, plmn.mme)
        self.ledger = CellResourceLedger()
        self.outcomes: list[TransmissionOutcome] = []

    def ue_context(self, imsi: str, loss: float) -> Optional[UeRadioContext]:
        ctx = self.enb.contexts.get(imsi)
        if ctx is None or not ctx.attached:
            return None
        return UeRadioContext(imsi, ctx.caps, ctx.restricted, loss)


def ce_repetitions_permitted(caps: Optional[UeCapabilities], restricted: bool, plmn: PlmnConfig) -> bool:
    if caps is None or not caps.ce_mode_a_supported or restricted:
        return False
    return plmn.ce_allowed_for(caps.ue_category)


def choose_repetitions(
    loss: float, ce_permitted: bool, cfg: LinkBudgetConfig = DEFAULT_CONFIG
) -> tuple[int, bool]:
    """Minimal sufficient repetition factor and whether it can close the link at all."""
    if not ce_permitted:
        return 1, True
    try:
        return required_repetitions(loss - cfg.normal_mcl, cfg), True
    except BeyondCeModeA:
        return cfg.max_repetitions, False


def schedule_transmission(
    cell: Cell, ue: UeRadioContext, payload_subframes: int, cfg: LinkBudgetConfig = DEFAULT_CONFIG
) -> TransmissionOutcome:
    permitted = ce_repetitions_permitted(ue.caps, ue.restricted, cell.plmn)
    reps, _ = choose_repetitions(ue.loss, permitted, cfg)
    outcome = evaluate_transmission(ue.loss, reps, payload_subframes, cfg)
    cell.ledger.record(outcome)
    cell.outcomes.append(outcome)
    return outcome


def ledger_report(cell: Cell) -> CellResourceLedger:
    return cell.ledger.snapshot()


def home_plmn(imsi: str, plmn_ids) -> str:
    """Longest configured PLMN id that prefixes ``imsi``."""
    matches = [p for p in plmn_ids if imsi.startswith(p)]
    if not matches:
        raise RoutingFailure(f"no PLMN matches IMSI {imsi}")
    return max(matches, key=len)


class Network:
    def __init__(self, plmns: list[PlmnConfig], subscriptions: list[SubscriptionRecord]):
        self.plmns = {p.plmn_id: p for p in plmns}
        self.cells: dict[str, Cell] = {}
        self.mmes: dict[str, MmeNode] = {}
        self.hsss: dict[str, HssNode] = {}
        by_hss: dict[str, dict[str, bool]] = {p.hss: {} for p in plmns if p.hss}
        for sub in subscriptions:
            owner = self.plmns[home_plmn(sub.imsi, self.plmns)]
            if owner.hss is None:
                raise ValueError(f"subscription {sub.imsi} belongs to PLMN {owner.plmn_id} without an HSS")
            by_hss[owner.hss][sub.imsi] = sub.enhanced_coverage_restricted
        for p in plmns:
            for cell_id in p.cells:
                self.cells[cell_id] = Cell(cell_id, p)
            self.mmes[p.mme] = MmeNode(p.mme, p.plmn_id, self._resolver(p.plmn_id))
            if p.hss:
                self.hsss[p.hss] = HssNode(p.hss, by_hss[p.hss])

    def _resolver(self, visited_plmn: str):
        return lambda imsi: self.route_s6a(visited_plmn, imsi)

    def route_s6a(self, visited_plmn: str, imsi: str) -> str:
        # visited_plmn == home is the non-roaming case and resolves the same way
        home = home_plmn(imsi, self.plmns)
        hss = self.plmns[home].hss
        if hss is None:
            raise RoutingFailure(f"home PLMN {home} of {imsi} has no HSS")
        return hss

    def node(self, node_id: str):
        if node_id in self.cells:
            return self.cells[node_id].enb
        return self.mmes.get(node_id) or self.hsss.get(node_id)

    def plmn_of_cell(self, cell_id: str) -> PlmnConfig:
        return self.cells[cell_id].plmn
