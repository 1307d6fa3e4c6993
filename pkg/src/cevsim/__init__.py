"""Discrete-event simulator for dynamic CE mode A in connected vehicles."""
from .radio import (
    BeyondCeModeA,
    Coverage,
    InvalidRepetition,
    LinkBudgetConfig,
    TransmissionOutcome,
    ce_gain_db,
    coverage_state,
    evaluate_transmission,
    required_repetitions,
)
from .scenario import Scenario, load, load_demo, validate
from .simulator import EventLog, Metrics, Simulation, run

__version__ = "0.1.0"
