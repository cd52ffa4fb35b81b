"""Facial expression classification: Canny region detection, per-region PCA
features and a back-propagation MLP."""
from .canny import CannyConfig, canny, edges_to_image
from .imgio import Rect, crop, histogram_equalize, load_pgm, read_pgm, save_pgm, write_pgm
from .mlp import Expression, MlpModel, TrainConfig, classify, forward, init_weights, train
from .pca import PcaModel, pca_fit, pca_project, pca_reconstruct, sym_eigen
from .pipeline import (
    ExpressionModel,
    build_features,
    evaluate,
    grid_search,
    load_model,
    read_manifest,
    save_model,
    train_expression_model,
)
from .regions import REGION_NAMES, RegionLayout, default_layout, extract_all
from .synth import synth_dataset

__all__ = [
    "CannyConfig",
    "canny",
    "edges_to_image",
    "Rect",
    "crop",
    "histogram_equalize",
    "load_pgm",
    "read_pgm",
    "save_pgm",
    "write_pgm",
    "Expression",
    "MlpModel",
    "TrainConfig",
    "classify",
    "forward",
    "init_weights",
    "train",
    "PcaModel",
    "pca_fit",
    "pca_project",
    "pca_reconstruct",
    "sym_eigen",
    "ExpressionModel",
    "build_features",
    "evaluate",
    "grid_search",
    "load_model",
    "read_manifest",
    "save_model",
    "train_expression_model",
    "REGION_NAMES",
    "RegionLayout",
    "default_layout",
    "extract_all",
    "synth_dataset",
]

__version__ = "0.1.0"
