"""Offline phase: dataset meta-features, meta-datasets, meta-regressors and diagnostics."""
from .dataset import MetaDataset, MetaExample, assemble_features, build_metadataset
from .diagnostics import crossover_stats, halving_trace, spearman
from .features import FEATURE_SET_VERSION, METAFEATURE_NAMES, compute_dataset_metafeatures
from .regressors import GbdtRegressor, KnnRegressor, MlpRegressor, Standardizer
from .training import (MetaModel, MetaModelBundle, grouped_folds, offline_mse_report,
                       train_meta_models)

__all__ = [
    "MetaDataset", "MetaExample", "assemble_features", "build_metadataset",
    "crossover_stats", "halving_trace", "spearman",
    "FEATURE_SET_VERSION", "METAFEATURE_NAMES", "compute_dataset_metafeatures",
    "GbdtRegressor", "KnnRegressor", "MlpRegressor", "Standardizer",
    "MetaModel", "MetaModelBundle", "grouped_folds", "offline_mse_report", "train_meta_models",
]
