"""Grid-oriented distributed clustering and frequent-itemset mining.

Variance-based merging of locally computed sub-clusters, single-reconciliation
frequent-itemset mining (GFM) with an FDM baseline, a deterministic simulated
multi-site grid, and a stage-max cost estimator.
"""

__version__ = "0.1.0"

from gridmine.exceptions import (
    EquivalenceError,
    InconsistencyError,
    SessionStateError,
    ValidationError,
)
from gridmine.models import FDMMiner, GFMMiner, VarianceClustering

__all__ = [
    "EquivalenceError",
    "FDMMiner",
    "GFMMiner",
    "InconsistencyError",
    "SessionStateError",
    "ValidationError",
    "VarianceClustering",
    "__version__",
]
