"""Evolutionary homology of coupled Lorenz networks on point clouds and protein structures."""
from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BudgetExceeded,
    ConfigError,
    EvohomError,
    FiltrationError,
    InputError,
    NumericalError,
    SimulationTooShort,
)
from .filtration import FiltrationParams, WeightedFlagFiltration, eh_filtration
from .metrics import bottleneck, distance_to_empty, eh_features, wasserstein
from .persistence import Bar, Barcode, barcodes, rips_filtration

__all__ = [
    "__version__",
    "Bar",
    "Barcode",
    "BudgetExceeded",
    "ConfigError",
    "EvohomError",
    "FiltrationError",
    "FiltrationParams",
    "InputError",
    "NumericalError",
    "SimulationTooShort",
    "WeightedFlagFiltration",
    "barcodes",
    "bottleneck",
    "distance_to_empty",
    "eh_features",
    "eh_filtration",
    "rips_filtration",
    "wasserstein",
]
