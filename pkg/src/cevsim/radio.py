"""Link budget with CE mode A subframe repetition.

Coupling loss is compared against a fixed maximum coupling loss (MCL) for
unrepeated transmission. Each doubling of the repetition factor buys a
constant number of dB, so with the defaults 32 repetitions close a link
10 dB beyond the normal MCL.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

CE_MODE_A_MAX_REPETITIONS = 32
DEFAULT_REPETITION_SET = (1, 2, 4, 8, 16, 32)


class RadioError(ValueError):
    pass


class InvalidRepetition(RadioError):
    pass


class BeyondCeModeA(RadioError):
    """The excess loss cannot be closed by any repetition factor in the set."""

    def __init__(self, excess_loss: float, max_gain: float):
        super().__init__(f"excess loss {excess_loss:.1f} dB exceeds maximum CE gain {max_gain:.1f} dB")
        self.excess_loss = excess_loss
        self.max_gain = max_gain


class Coverage(str, enum.Enum):
    NORMAL = "Normal"
    EXTENDED = "Extended"


def check_coupling_loss(value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise RadioError(f"coupling loss must be finite and non-negative, got {value!r}")
    return value


@dataclass(frozen=True)
class LinkBudgetConfig:
    normal_mcl: float = 140.7
    gain_per_doubling: float = 2.0
    repetition_set: tuple[int, ...] = DEFAULT_REPETITION_SET
    hysteresis: float = 3.0

    def __post_init__(self):
        reps = tuple(int(r) for r in self.repetition_set)
        object.__setattr__(self, "repetition_set", reps)
        for problem in config_problems(self.normal_mcl, self.gain_per_doubling, reps, self.hysteresis):
            raise RadioError(problem)

    @property
    def max_repetitions(self) -> int:
        return self.repetition_set[-1]


def config_problems(normal_mcl, gain_per_doubling, repetition_set, hysteresis) -> list[str]:
    """Return human-readable violations of the link budget invariants."""
    problems = []
    if not math.isfinite(normal_mcl) or normal_mcl < 0:
        problems.append("normal_mcl must be finite and non-negative")
    if not math.isfinite(gain_per_doubling) or gain_per_doubling <= 0:
        problems.append("gain_per_doubling must be positive")
    if not math.isfinite(hysteresis) or hysteresis < 0:
        problems.append("hysteresis must be non-negative")
    reps = list(repetition_set)
    if not reps or 1 not in reps:
        problems.append("repetition_set must contain 1")
    if any(r <= 0 for r in reps):
        problems.append("repetition_set members must be positive integers")
    if any(b <= a for a, b in zip(reps, reps[1:])):
        problems.append("repetition_set must be strictly increasing")
    if reps and max(reps) > CE_MODE_A_MAX_REPETITIONS:
        problems.append(f"repetition_set exceeds the CE mode A maximum of {CE_MODE_A_MAX_REPETITIONS}")
    return problems


DEFAULT_CONFIG = LinkBudgetConfig()


@dataclass(frozen=True)
class TransmissionOutcome:
    delivered: bool
    reps_used: int
    subframes: int

    @property
    def airtime_ms(self) -> int:
        # one subframe is one millisecond
        return self.subframes


def ce_gain_db(reps: int, cfg: LinkBudgetConfig = DEFAULT_CONFIG) -> float:
    if reps not in cfg.repetition_set:
        raise InvalidRepetition(f"{reps} is not in repetition set {list(cfg.repetition_set)}")
    return cfg.gain_per_doubling * math.log2(reps)


def required_repetitions(excess_loss: float, cfg: LinkBudgetConfig = DEFAULT_CONFIG) -> int:
    """Smallest repetition factor whose gain covers ``excess_loss`` dB."""
    if not math.isfinite(excess_loss):
        raise RadioError("excess loss must be finite")
    needed = max(excess_loss, 0.0)
    for reps in cfg.repetition_set:
        if ce_gain_db(reps, cfg) >= needed:
            return reps
    raise BeyondCeModeA(excess_loss, ce_gain_db(cfg.max_repetitions, cfg))


def evaluate_transmission(
    loss: float, reps: int, payload_subframes: int, cfg: LinkBudgetConfig = DEFAULT_CONFIG
) -> TransmissionOutcome:
    if payload_subframes < 1:
        raise RadioError("payload_subframes must be at least 1")
    loss = check_coupling_loss(loss)
    delivered = loss <= cfg.normal_mcl + ce_gain_db(reps, cfg)
    # failed repetitions occupy the spectrum all the same
    return TransmissionOutcome(delivered, reps, payload_subframes * reps)


def coverage_state(loss: float, previous: Coverage, cfg: LinkBudgetConfig = DEFAULT_CONFIG) -> Coverage:
    if previous is Coverage.NORMAL and loss > cfg.normal_mcl + cfg.hysteresis:
        return Coverage.EXTENDED
    if previous is Coverage.EXTENDED and loss < cfg.normal_mcl - cfg.hysteresis:
        return Coverage.NORMAL
    return previous
