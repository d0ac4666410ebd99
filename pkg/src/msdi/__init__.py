"""Copula-based multivariate standardized drought index (MSDI) with an SPI baseline."""

from ._accel import USE_NUMBA
from .copulas import CopulaFamily, CopulaModel
from .distributions import Family, FittedMarginal
from .errors import MSDIError
from .index import IndexSeries, ThresholdTable
from .ingestion import ClimateSeries, load_csv

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA",
    "ClimateSeries",
    "load_csv",
    "Family",
    "FittedMarginal",
    "CopulaFamily",
    "CopulaModel",
    "IndexSeries",
    "ThresholdTable",
    "MSDIError",
]
