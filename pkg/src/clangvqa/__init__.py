"""Contrastive language-event-graph video question answering at desk scale."""
from .data_synth import DatasetSpec, SyntheticDataset, generate_dataset, load_dataset
from .estimator import CLanGClassifier, EventGraphBuilder
from .event_graph import EventGraph, ObjectObservation, build_graph
from .hier_pool import forward_hierarchy, gnn_cluster_step, layer_schedule, multi_scale_fuse
from .trainer import Checkpoint, LossBundle, MetricsLog, TrainConfig, emit_report, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "CLanGClassifier",
    "DatasetSpec",
    "EventGraph",
    "EventGraphBuilder",
    "LossBundle",
    "MetricsLog",
    "ObjectObservation",
    "SyntheticDataset",
    "TrainConfig",
    "build_graph",
    "emit_report",
    "evaluate",
    "forward_hierarchy",
    "generate_dataset",
    "gnn_cluster_step",
    "layer_schedule",
    "load_dataset",
    "multi_scale_fuse",
    "train",
]
