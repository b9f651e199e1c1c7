"""Integrative graph convolutional network for multi-modal node classification."""

from .data import DatasetManifest, SyntheticSpec, generate_synthetic, load_dataset
from .graph import ThresholdReport, build_similarity_network
from .metrics import MetricsReport, classification_report, stratified_split
from .model import ModelParams, MultiModalDataset, forward, init_params
from .train import TrainConfig, TrainHistory, train

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "MetricsReport",
    "ModelParams",
    "MultiModalDataset",
    "SyntheticSpec",
    "ThresholdReport",
    "TrainConfig",
    "TrainHistory",
    "build_similarity_network",
    "classification_report",
    "forward",
    "generate_synthetic",
    "init_params",
    "load_dataset",
    "stratified_split",
    "train",
]
