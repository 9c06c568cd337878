"""Differential push gossip for peer-to-peer reputation aggregation."""

from .adversary import CollusionConfig, apply_collusion, closed_form_deltas
from .aggregation import (
    AggregationResult,
    FeedbackCache,
    Variant,
    aggregate,
    calibrated_all,
    calibrated_single,
    global_all,
    global_single,
)
from .config import ConfigError, SimConfig
from .gossip import ChurnModel, GossipParams, GossipState, run
from .metrics import MetricsReport, average_rms_error, scaling_fit
from .pa_graph import Graph, generate
from .scenarios import TrustScenario, generate_trust
from .trust import Population, TrustMatrix, WeightParams

__all__ = [
    "AggregationResult", "ChurnModel", "CollusionConfig", "ConfigError", "FeedbackCache",
    "Graph", "GossipParams", "GossipState", "MetricsReport", "Population", "SimConfig",
    "TrustMatrix", "TrustScenario", "Variant", "WeightParams", "aggregate", "apply_collusion",
    "average_rms_error", "calibrated_all", "calibrated_single", "closed_form_deltas", "generate",
    "generate_trust", "global_all", "global_single", "run", "scaling_fit",
]
