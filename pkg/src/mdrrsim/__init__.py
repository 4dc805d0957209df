"""Frame-based uplink scheduling simulator for OFDMA broadband wireless access.

Round robin, weighted round robin, deficit round robin and modified DRR
with CINR-aware weights, adaptive modulation and coding, and a CLI that
runs scenario files and writes CSV reports.
"""

from .core import ConfigurationError, Packet, PriorityClass, QoSParams, ServiceClass, ServiceFlow
from .disciplines import Discipline, DrrMode, PriorityMode, Scheduler
from .sim import SimConfig, SimResult, Simulation, run

__all__ = [
    "ConfigurationError",
    "Discipline",
    "DrrMode",
    "Packet",
    "PriorityClass",
    "PriorityMode",
    "QoSParams",
    "Scheduler",
    "ServiceClass",
    "ServiceFlow",
    "SimConfig",
    "SimResult",
    "Simulation",
    "run",
]

__version__ = "0.1.0"
