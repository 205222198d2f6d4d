"""Query-conditioned video shot summarization.

A generator scores the shots of a video against a two-concept text query,
a three-way critic pushes the generated summaries toward ground-truth
ones, and a bipartite-matching harness scores the result.  Everything is
numpy on top of a small taped autodiff core.
"""

__version__ = "0.1.0"

from .errors import (
    ConceptLookupError,
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    GenerationError,
    NumericError,
    QsummError,
    VersionError,
)
from .tensor import Tape, Tensor

__all__ = [
    "__version__",
    "Tape",
    "Tensor",
    "QsummError",
    "DimensionError",
    "ConfigError",
    "ContractError",
    "NumericError",
    "FormatError",
    "VersionError",
    "ConceptLookupError",
    "GenerationError",
]
