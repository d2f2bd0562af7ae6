"""Uplink MMSE spectral efficiency in hexagonal cellular networks with many antennas.

Monte Carlo simulation of the network together with the large-system limits
of the normalized SIR, so the two can be checked against each other.
"""

from .params import (ConfigError, ConstantPower, Fractional, PathLossInversion,
                     ScenarioParams, TwoLevel)

__all__ = ["ConfigError", "ConstantPower", "Fractional", "PathLossInversion",
           "ScenarioParams", "TwoLevel"]
__version__ = "0.1.0"
