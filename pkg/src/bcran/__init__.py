"""Discrete-event simulator of blockchain-enabled RAN sharing."""
from .config import SimConfig, from_dict, parse_config
from .ledger import Ledger, LedgerConfig, LinkModel, Transaction, simulate_ledger
from .sim import MetricsSeries, aggregate_metrics, compare_static_dynamic, run_scenario

__all__ = [
    "Ledger", "LedgerConfig", "LinkModel", "MetricsSeries", "SimConfig", "Transaction",
    "aggregate_metrics", "compare_static_dynamic", "from_dict", "parse_config",
    "run_scenario", "simulate_ledger",
]

__version__ = "0.1.0"
