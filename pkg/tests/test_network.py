import pytest

from cevsim.network import (
    Cell,
    CellResourceLedger,
    Network,
    PlmnConfig,
    SubscriptionRecord,
    UeRadioContext,
    home_plmn,
    ledger_report,
    schedule_transmission,
)
from cevsim.protocol import RoutingFailure, UeCapabilities, UeCategory
from cevsim.radio import LinkBudgetConfig, TransmissionOutcome

CFG = LinkBudgetConfig()
HOME = PlmnConfig("26201", True, ("cell-a",), "mme-a", "hss-a")
VISITED = PlmnConfig("20801", True, ("cell-v",), "mme-v", None)
NO_CE = PlmnConfig("20802", False, ("cell-n",), "mme-n", None)
IMSI = "262010000000001"
CE = UeCapabilities(ce_mode_a_supported=True, restriction_supported=True)


def ue(loss, caps=CE, restricted=False):
    return UeRadioContext(IMSI, caps, restricted, loss)


def test_subscription_imsi_format():
    with pytest.raises(ValueError):
        SubscriptionRecord("26201")


class TestSchedule:
    def test_ce_ue_deep_in_garage(self):
        cell = Cell("cell-a", HOME)
        out = schedule_transmission(cell, ue(CFG.normal_mcl + 9), 1, CFG)
        # g(16) = 8 < 9 <= g(32) = 10
        assert (out.reps_used, out.delivered) == (32, True)

    def test_restricted_ue(self):
        cell = Cell("cell-a", HOME)
        out = schedule_transmission(cell, ue(CFG.normal_mcl + 9, restricted=True), 1, CFG)
        assert (out.reps_used, out.delivered) == (1, False)

    @pytest.mark.parametrize("caps", [CE, UeCapabilities()])
    def test_normal_coverage(self, caps):
        cell = Cell("cell-a", HOME)
        out = schedule_transmission(cell, ue(CFG.normal_mcl - 5, caps), 1, CFG)
        assert (out.reps_used, out.delivered) == (1, True)

    def test_not_ce_capable(self):
        cell = Cell("cell-a", HOME)
        out = schedule_transmission(cell, ue(CFG.normal_mcl + 3, UeCapabilities()), 1, CFG)
        assert (out.reps_used, out.delivered) == (1, False)

    def test_visited_network_without_ce_support(self):
        cell = Cell("cell-n", NO_CE)
        out = schedule_transmission(cell, ue(CFG.normal_mcl + 3), 1, CFG)
        assert out.reps_used == 1
        catm1 = UeCapabilities(True, False, UeCategory.CAT_M1)
        assert schedule_transmission(cell, ue(CFG.normal_mcl + 3, catm1), 1, CFG).reps_used == 4

    def test_beyond_mode_a_charged_at_max(self):
        cell = Cell("cell-a", HOME)
        out = schedule_transmission(cell, ue(CFG.normal_mcl + 12), 2, CFG)
        assert (out.reps_used, out.delivered, out.subframes) == (32, False, 64)
        assert ledger_report(cell).subframes_used == 64


class TestLedger:
    def test_empty(self):
        snap = ledger_report(Cell("cell-a", HOME))
        assert (snap.subframes_used, snap.subframes_used_ce, dict(snap.transmissions)) == (0, 0, {})

    def test_single_ce_delivery(self):
        led = CellResourceLedger()
        led.record(TransmissionOutcome(True, 32, 32))
        assert (led.subframes_used, led.subframes_used_ce) == (32, 32)

    def test_mixed(self):
        led = CellResourceLedger()
        outcomes = [TransmissionOutcome(True, 1, 2)] * 10 + [TransmissionOutcome(True, 32, 32)]
        for o in outcomes:
            led.record(o)
        assert sum(o.subframes for o in outcomes) == 52
        assert (led.subframes_used, led.subframes_used_ce) == (52, 32)
        assert led.transmissions == {1: 10, 32: 1}

    def test_snapshot_is_detached(self):
        cell = Cell("cell-a", HOME)
        snap = ledger_report(cell)
        schedule_transmission(cell, ue(100.0), 1, CFG)
        assert snap.subframes_used == 0

    def test_dict_round_trip(self):
        led = CellResourceLedger(40, 32, {1: 8, 32: 1})
        assert CellResourceLedger.from_dict(led.to_dict()) == led


class TestRouting:
    def setup_method(self):
        self.net = Network(
            [HOME, VISITED, PlmnConfig("310260", True, ("cell-us",), "mme-us", "hss-us")],
            [SubscriptionRecord(IMSI, True), SubscriptionRecord("310260000000009", False)],
        )

    def test_local(self):
        assert self.net.route_s6a("26201", IMSI) == "hss-a"

    def test_roaming(self):
        assert self.net.route_s6a("20801", IMSI) == "hss-a"
        assert self.net.route_s6a("20801", "310260000000009") == "hss-us"

    def test_unknown(self):
        with pytest.raises(RoutingFailure):
            self.net.route_s6a("26201", "999990000000000")

    def test_home_without_hss(self):
        with pytest.raises(RoutingFailure):
            self.net.route_s6a("26201", "208010000000000")

    def test_subscriptions_land_in_home_hss(self):
        assert self.net.hsss["hss-a"].subscriptions == {IMSI: True}
        assert self.net.hsss["hss-us"].subscriptions == {"310260000000009": False}

    def test_longest_prefix(self):
        assert home_plmn("262011111111111", ["2620", "26201"]) == "26201"
