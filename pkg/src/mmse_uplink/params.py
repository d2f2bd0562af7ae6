"""Scenario parameters and power-control policy descriptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union


class ConfigError(ValueError):
    """Invalid scenario or policy parameters."""


@dataclass(frozen=True)
class ConstantPower:
    """Every active mobile transmits with the same power."""

    power: float = 1.0

    @property
    def d_min(self) -> float:
        return 0.0

    def describe(self) -> str:
        return f"constant(P={self.power:g})"


@dataclass(frozen=True)
class TwoLevel:
    """Closest half of the active mobiles in a cell use ``p_low``, the rest ``p_high``."""

    p_low: float = 0.5
    p_high: float = 1.0

    @property
    def d_min(self) -> float:
        return 0.0

    def describe(self) -> str:
        return f"two_level(Pl={self.p_low:g},Ph={self.p_high:g})"


@dataclass(frozen=True)
class Fractional:
    """Power ``d**(alpha*epsilon)`` for a mobile at distance ``d`` from its base station.

    Mobiles closer than ``d_min`` are silenced.
    """

    epsilon: float = 1.0
    d_min: float = 1.0

    def describe(self) -> str:
        return f"fractional(eps={self.epsilon:g},dmin={self.d_min:g})"


def PathLossInversion(d_min: float = 1.0) -> Fractional:
    return Fractional(epsilon=1.0, d_min=d_min)


Policy = Union[ConstantPower, TwoLevel, Fractional]


def validate_policy(policy: Policy) -> None:
    if isinstance(policy, ConstantPower):
        if not policy.power > 0:
            raise ConfigError("constant power must be positive")
    elif isinstance(policy, TwoLevel):
        if not 0 < policy.p_low <= policy.p_high:
            raise ConfigError("two-level powers need 0 < p_low <= p_high")
    elif isinstance(policy, Fractional):
        if not 0.0 <= policy.epsilon <= 1.0:
            raise ConfigError("fractional epsilon must lie in [0, 1]")
        if policy.d_min < 0:
            raise ConfigError("d_min must be non-negative")
    else:
        raise ConfigError(f"unsupported policy {policy!r}")


def hex_side(rho_c: float) -> float:
    """Side length (= circumradius) of a regular hexagon with area ``1/rho_c``."""
    return math.sqrt(2.0 / (3.0 * math.sqrt(3.0) * rho_c))


@dataclass(frozen=True)
class ScenarioParams:
    """All scalar model parameters of one scenario.

    ``R`` is the radius of the disk holding the potential interferers; the
    mobile count ``n`` and the ratio ``c = n / N`` follow from it.
    """

    alpha: float
    rho_m: float
    rho_c: float
    K: int
    N: int
    R: float
    policy: Policy = field(default_factory=ConstantPower)
    P_M: Optional[float] = None
    P_lb: Optional[float] = None
    sampling_mode: str = "fast"

    def __post_init__(self):
        if not self.alpha > 2:
            raise ConfigError("alpha must exceed 2")
        if not (self.rho_m > 0 and self.rho_c > 0):
            raise ConfigError("densities must be positive")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if not self.R > 0:
            raise ConfigError("disk radius must be positive")
        if self.sampling_mode not in ("fast", "exact"):
            raise ConfigError("sampling_mode must be 'fast' or 'exact'")
        validate_policy(self.policy)
        lo, hi = self.power_bounds
        if not 0 <= lo <= hi:
            raise ConfigError(f"power bounds [{lo}, {hi}] are inconsistent")
        for p in self._nominal_powers():
            if p < lo * (1 - 1e-12) or p > hi * (1 + 1e-12):
                raise ConfigError(
                    f"policy power {p:g} outside [P_lb, P_M] = [{lo:g}, {hi:g}]")

    @classmethod
    def from_ratio(cls, *, c: float, N: int, rho_m: float, **kw) -> "ScenarioParams":
        """Build from ``c = n/N`` instead of the disk radius."""
        if not c > 0:
            raise ConfigError("c must be positive")
        R = math.sqrt(c * N / (math.pi * rho_m))
        return cls(N=N, rho_m=rho_m, R=R, **kw)

    @property
    def n(self) -> int:
        return int(round(math.pi * self.rho_m * self.R ** 2))

    @property
    def c(self) -> float:
        return self.n / self.N

    @property
    def cell_side(self) -> float:
        return hex_side(self.rho_c)

    @property
    def activity(self) -> float:
        """Expected fraction of potential mobiles with non-zero power."""
        return min(1.0, self.K * self.rho_c / self.rho_m)

    @property
    def power_bounds(self) -> tuple:
        """(P_lb, P_M) after applying per-policy defaults."""
        pol = self.policy
        if isinstance(pol, ConstantPower):
            lb, pm = min(pol.power, 1.0), pol.power
        elif isinstance(pol, TwoLevel):
            lb, pm = min(pol.p_low, 1.0), pol.p_high
        else:
            k = self.alpha * pol.epsilon
            lb = min(pol.d_min ** k if pol.d_min > 0 or k == 0 else 0.0, 1.0)
            pm = self.cell_side ** k
        if self.P_lb is not None:
            lb = self.P_lb
        if self.P_M is not None:
            pm = self.P_M
        return lb, pm

    def _nominal_powers(self):
        pol = self.policy
        if isinstance(pol, ConstantPower):
            return [pol.power]
        if isinstance(pol, TwoLevel):
            return [pol.p_low, pol.p_high]
        k = self.alpha * pol.epsilon
        out = [self.cell_side ** k]
        if pol.d_min > 0:
            out.append(pol.d_min ** k)
        return out

    def with_(self, **kw) -> "ScenarioParams":
        return replace(self, **kw)
