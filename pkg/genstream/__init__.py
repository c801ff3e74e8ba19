"""Generation-based coded streaming: exact delivery-count analysis, Monte Carlo and UDP transport."""

from .analysis import SchemeParams, cdf_T, expected_T, p_m
from .codec import Scheme
from .errors import GenstreamError

__version__ = "0.1.0"

__all__ = ["GenstreamError", "Scheme", "SchemeParams", "cdf_T", "expected_T", "p_m", "__version__"]
