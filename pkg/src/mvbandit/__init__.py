"""Personalized policies from logged bandit data with missing attributes."""

__version__ = "0.1.0"

from .data import (
    Categorical,
    Continuous,
    FeatureSchema,
    GroundTruth,
    LoggedDataset,
    PartialFeature,
)

__all__ = [
    "Categorical",
    "Continuous",
    "FeatureSchema",
    "GroundTruth",
    "LoggedDataset",
    "PartialFeature",
]
