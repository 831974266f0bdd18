"""Discrete-event simulation of End Devices and the polling Coordinator."""

from .coordinator import Coordinator, PostIntent, Reading
from .devices import EndDevice, Transmission
from .kernel import EventQueue, SimEvent
from .scenario import ConfigError, Scenario, load_scenario, parse_scenario
from .simulation import SimReport, Simulation, run

__all__ = [
    "ConfigError", "Coordinator", "EndDevice", "EventQueue", "PostIntent", "Reading", "Scenario",
    "SimEvent", "SimReport", "Simulation", "Transmission", "load_scenario", "parse_scenario", "run",
]
