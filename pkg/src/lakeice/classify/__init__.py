"""Frozen / non-frozen pixel classification and ice-date extraction."""

from .features import Acquisition, FeatureMatrix, assemble_features
from .importance import BoostedTreeImportance, band_importance, best_split
from .labels import EnrichedLabels, enrich_labels, read_label_csv, write_label_csv
from .metrics import Metrics, confusion_matrix, metrics
from .splits import fold_masks, interleaved_split, kfold_split
from .svm import SMOClassifier, kernel_matrix, kkt_residuals
from .temporal import (DailyLabelSeries, DailyScoreCube, IceDates, daily_aggregate, daily_labels,
                       extract_ice_dates, frozen_fraction, frozen_state, gaussian_weights, label_day,
                       mta_smooth)

__all__ = [
    "Acquisition", "BoostedTreeImportance", "DailyLabelSeries", "DailyScoreCube", "EnrichedLabels",
    "FeatureMatrix", "IceDates", "Metrics", "SMOClassifier", "assemble_features", "band_importance",
    "best_split", "confusion_matrix", "daily_aggregate", "daily_labels", "enrich_labels",
    "extract_ice_dates", "fold_masks", "frozen_fraction", "frozen_state", "gaussian_weights",
    "interleaved_split", "kernel_matrix", "kfold_split", "kkt_residuals", "label_day", "metrics",
    "mta_smooth", "read_label_csv", "write_label_csv",
]
