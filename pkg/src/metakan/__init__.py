"""Kolmogorov-Arnold networks and MetaKANs: KANs whose activation weights are
generated by small meta-learners from learnable per-edge prompts."""

from .basis import RbfSpec, SplineSpec, WaveletActivation
from .estimators import KANRegressor, MetaKANRegressor
from .network import (
    BSplineSilu,
    ClusterPlan,
    GaussianRbf,
    KanNetwork,
    MetaKanNetwork,
    MetaLearner,
    MexicanHatWavelet,
    NetworkShape,
    cluster_layers,
    count_params,
    kan_forward,
    make_kind,
    materialize,
    memory_efficient,
    metakan_forward,
)
from .train import TrainConfig, train_kan, train_metakan

__version__ = "0.1.0"

__all__ = [
    "BSplineSilu",
    "ClusterPlan",
    "GaussianRbf",
    "KANRegressor",
    "KanNetwork",
    "MetaKANRegressor",
    "MetaKanNetwork",
    "MetaLearner",
    "MexicanHatWavelet",
    "NetworkShape",
    "RbfSpec",
    "SplineSpec",
    "TrainConfig",
    "WaveletActivation",
    "cluster_layers",
    "count_params",
    "kan_forward",
    "make_kind",
    "materialize",
    "memory_efficient",
    "metakan_forward",
    "train_kan",
    "train_metakan",
]
