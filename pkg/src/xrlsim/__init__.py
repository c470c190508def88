"""Simulator and whole-body controller for a two-leg closed-chain
payload-carrying augmentation robot."""

from .balance import BalanceReport, analyze
from .params import RobotParams
from .scenario import ScenarioConfig, Summary, load_config, parse_config, run

__version__ = "0.1.0"

__all__ = [
    "BalanceReport",
    "RobotParams",
    "ScenarioConfig",
    "Summary",
    "analyze",
    "load_config",
    "parse_config",
    "run",
    "__version__",
]
