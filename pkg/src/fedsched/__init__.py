"""Scheduling-aware federated learning over stochastic-geometry wireless uplinks."""

from .params import NetworkParams, Policy, db_to_linear, linear_to_db, parse_policy
from .rates import RateQuery, RateReport, rounds_to_gap, success_prob, v_integral, z_integral

__all__ = [
    "NetworkParams",
    "Policy",
    "RateQuery",
    "RateReport",
    "db_to_linear",
    "linear_to_db",
    "parse_policy",
    "rounds_to_gap",
    "success_prob",
    "v_integral",
    "z_integral",
]
__version__ = "0.1.0"
