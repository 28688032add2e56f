"""Certified bi-Lipschitz regularization of group actions on compact metric spaces."""

from .group_core import (
    IDENTITY,
    GeneratorSet,
    GroupWord,
    Mode,
    WeightTable,
    build_weight_table,
    enumerate_ball,
    estimate_critical_exponent,
    free_tail_bound,
)
from .action_space import CircleAction, CircleHomeoPL, CircleSample, PermutationAction, PointCloudSample
from .metric_engine import Certificate, RegularizedMetric
from .circle_conjugator import MeasureCDF, build_mu, certify_conjugation, conjugate_action, psi_mu

__version__ = "0.1.0"

__all__ = [
    "IDENTITY",
    "GeneratorSet",
    "GroupWord",
    "Mode",
    "WeightTable",
    "build_weight_table",
    "enumerate_ball",
    "estimate_critical_exponent",
    "free_tail_bound",
    "CircleAction",
    "CircleHomeoPL",
    "CircleSample",
    "PermutationAction",
    "PointCloudSample",
    "Certificate",
    "RegularizedMetric",
    "MeasureCDF",
    "build_mu",
    "certify_conjugation",
    "conjugate_action",
    "psi_mu",
]
