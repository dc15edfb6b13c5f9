"""Fixed 15-value dataset characterization used as meta-regressor inputs."""
from __future__ import annotations

import logging
import math
import warnings

import numpy as np
from scipy import stats

from ..data import Dataset
from ..gbdt import logistic_loss

log = logging.getLogger(__name__)

FEATURE_SET_VERSION = "dmf-15/v1"

METAFEATURE_NAMES = (
    "n_rows",
    "n_cols",
    "log_n_rows",
    "log_n_cols",
    "rows_per_col",
    "minority_fraction",
    "mean_feature_mean",
    "mean_feature_std",
    "mean_feature_skew",
    "mean_feature_kurtosis",
    "mean_abs_feature_label_corr",
    "mean_abs_pairwise_corr",
    "feature_std_dispersion",
    "label_entropy",
    "prior_baseline_loss",
)
N_METAFEATURES = len(METAFEATURE_NAMES)


def _finite_mean(v: np.ndarray) -> float:
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else 0.0


def compute_dataset_metafeatures(dataset: Dataset) -> np.ndarray:
    """Statistics of the training split, plus one landmark: the log loss of the
    training-set class prior evaluated on the validation split.

    Statistics that are undefined for a constant column (skew, kurtosis,
    correlations) are imputed with 0.
    """
    X, y = dataset.X_train, dataset.y_train
    n, d = X.shape
    p1 = float(y.mean())
    minority = min(p1, 1 - p1)
    std = X.std(axis=0)
    constant = std == 0
    if constant.any():
        log.warning("dataset %s: %d constant feature column(s); statistics imputed",
                    dataset.id, int(constant.sum()))
    with warnings.catch_warnings(), np.errstate(all="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        skew = np.where(constant, 0.0, stats.skew(X, axis=0))
        kurt = np.where(constant, 0.0, stats.kurtosis(X, axis=0))
        Xc = X - X.mean(axis=0)
        yc = y - p1
        denom = np.sqrt((Xc ** 2).sum(axis=0) * (yc ** 2).sum())
        label_corr = np.where(denom > 0, (Xc * yc[:, None]).sum(axis=0) / denom, 0.0)
        if d > 1 and (~constant).sum() > 1:
            C = np.corrcoef(X[:, ~constant], rowvar=False)
            iu = np.triu_indices(C.shape[0], k=1)
            pair = _finite_mean(np.abs(C[iu]))
        else:
            pair = 0.0
    std_mean = float(std.mean())
    dispersion = float(std.std() / std_mean) if std_mean > 0 else 0.0
    entropy = 0.0 if minority == 0 else -(p1 * math.log(p1) + (1 - p1) * math.log(1 - p1))
    baseline = logistic_loss(dataset.y_val, np.full(dataset.val_idx.size, p1))
    vec = np.array([
        n, d, math.log(n), math.log(d), n / d, minority,
        _finite_mean(X.mean(axis=0)), _finite_mean(std), _finite_mean(skew), _finite_mean(kurt),
        _finite_mean(np.abs(label_corr)), pair, dispersion, entropy, baseline,
    ], dtype=float)
    return np.where(np.isfinite(vec), vec, 0.0)
