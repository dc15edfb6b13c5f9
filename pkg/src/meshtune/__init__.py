"""Successive halving with meta-learned elimination for GBDT hyperparameter tuning."""

__version__ = "0.1.0"
