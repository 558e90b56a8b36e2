"""Domain layer: interfaces, errors and data models (dataclasses)."""

from .errors import (
    ConfigurationError,
    DataValidationError,
    EffectFusionError,
    NumericalError,
    SelectionError,
)
from .interfaces import IConfigService, IExporter, IFileService, IProgress, IReportRenderer
from .models import (
    CategoricalCovariate,
    CoefficientVector,
    ColumnInfo,
    ContinuousCovariate,
    Dataset,
    DesignMatrix,
    LevelPartition,
)

__all__ = [
    "CategoricalCovariate",
    "CoefficientVector",
    "ColumnInfo",
    "ConfigurationError",
    "ContinuousCovariate",
    "DataValidationError",
    "Dataset",
    "DesignMatrix",
    "EffectFusionError",
    "IConfigService",
    "IExporter",
    "IFileService",
    "IProgress",
    "IReportRenderer",
    "LevelPartition",
    "NumericalError",
    "SelectionError",
]
