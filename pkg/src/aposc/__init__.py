"""Almost periodic forcing of the asymmetric oscillator: series, small divisors,
section maps and normal forms."""

__version__ = "0.1.0"

from .apfun import (  # noqa: E402
    ActionProfile,
    APSeries,
    FrequencyBasis,
    MultiIndex,
    RationalRelation,
    SpatialStructure,
    weight,
    weighted_norm,
)
from .oscillator import OscParams, State, AngleState, forcing  # noqa: E402

__all__ = [
    "__version__",
    "ActionProfile",
    "APSeries",
    "FrequencyBasis",
    "MultiIndex",
    "RationalRelation",
    "SpatialStructure",
    "weight",
    "weighted_norm",
    "OscParams",
    "State",
    "AngleState",
    "forcing",
]
