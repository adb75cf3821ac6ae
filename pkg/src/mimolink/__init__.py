"""Link-level Monte Carlo simulator for a 2x2 MIMO OFDM downlink.

Spatial multiplexing (SM) and SFBC transmit diversity (TD) are compared over a
Kronecker-correlated, Doppler-faded, Rayleigh/Rician tapped-delay-line channel.
"""

__version__ = "0.1.0"

from mimolink.errors import (
    DimensionError,
    InvalidParameterError,
    MimolinkError,
    UndefinedAverageError,
)

__all__ = [
    "__version__",
    "DimensionError",
    "InvalidParameterError",
    "MimolinkError",
    "UndefinedAverageError",
]
