"""Per-cell power control with a cap of K active mobiles, and the power laws it induces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.special import betainc

from .geometry import HexDistance, HexLattice, NetworkRealization
from .params import ConfigError, ConstantPower, Fractional, Policy, ScenarioParams, TwoLevel


@dataclass
class PowerAssignment:
    powers: np.ndarray  # one per mobile of the realization, 0 when silent
    active: np.ndarray
    cell_distance: np.ndarray  # distance of each mobile to its own base station
    p0: float
    r0: float

    def check(self, network: NetworkRealization, K: int, p_lb: float, p_max: float) -> None:
        """Raise ``AssertionError`` if the K-cap or the power support is violated."""
        counts = np.bincount(network.cell_index[self.active],
                             minlength=network.origin_index + 1)
        counts[network.origin_index] += 1  # the representative mobile
        if counts.max(initial=0) > K:
            raise AssertionError(f"cell with {counts.max()} active mobiles exceeds K={K}")
        p = self.powers[self.active]
        tol = 1e-12 * max(p_max, 1.0)
        if np.any(p <= 0) or np.any(p < p_lb - tol) or np.any(p > p_max + tol):
            raise AssertionError("active power outside [P_lb, P_M]")
        if np.any(self.powers[~self.active] != 0):
            raise AssertionError("inactive mobile with non-zero power")
        if not (self.p0 > 0 and p_lb - tol <= self.p0 <= p_max + tol):
            raise AssertionError("representative mobile power out of range")


def select_active(cell_ids, K: int, rng: np.random.Generator, *,
                  eligible: Optional[np.ndarray] = None,
                  reserved_cell: Optional[int] = None) -> np.ndarray:
    """Uniformly pick ``min(K, #eligible)`` mobiles in every cell.

    ``reserved_cell`` has one slot taken by the representative mobile, so
    only ``K - 1`` further mobiles are picked there. Returns a boolean mask.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    cell_ids = np.asarray(cell_ids, dtype=np.int64)
    n = len(cell_ids)
    if eligible is None:
        eligible = np.ones(n, dtype=bool)
    keys = rng.random(n)
    order = np.lexsort((keys, ~eligible, cell_ids))
    sorted_cells = cell_ids[order]
    first = np.searchsorted(sorted_cells, sorted_cells, side="left")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n) - first
    slots = np.full(n, K)
    if reserved_cell is not None:
        slots[cell_ids == reserved_cell] = K - 1
    return eligible & (rank < slots)


def _rank_within_cells(cells: np.ndarray, dist: np.ndarray) -> np.ndarray:
    order = np.lexsort((dist, cells))
    sc = cells[order]
    first = np.searchsorted(sc, sc, side="left")
    rank = np.empty(len(cells), dtype=np.int64)
    rank[order] = np.arange(len(cells)) - first
    return rank


def assign_powers(policy: Policy, network: NetworkRealization, lattice: HexLattice,
                  rng: np.random.Generator, *, alpha: float, K: int) -> PowerAssignment:
    """Select the active mobiles of every cell and give them their powers."""
    if not isinstance(policy, (ConstantPower, Fractional, TwoLevel)):
        raise ConfigError(f"unsupported policy {policy!r}")
    pos = network.positions
    centers = lattice.centers[network.cell_index]
    d = np.hypot(pos[:, 0] - centers[:, 0], pos[:, 1] - centers[:, 1])
    r0 = float(np.hypot(*network.representative))
    eligible = d >= policy.d_min if policy.d_min > 0 else None
    active = select_active(network.cell_index, K, rng, eligible=eligible,
                           reserved_cell=network.origin_index)
    powers = np.zeros(len(pos))

    if isinstance(policy, ConstantPower):
        powers[active] = policy.power
        p0 = policy.power
    elif isinstance(policy, Fractional):
        k = alpha * policy.epsilon
        powers[active] = d[active] ** k
        p0 = r0 ** k
    elif isinstance(policy, TwoLevel):
        idx = np.flatnonzero(active)
        cells = np.append(network.cell_index[idx], network.origin_index)
        dist = np.append(d[idx], r0)
        rank = _rank_within_cells(cells, dist)
        m = np.bincount(cells)[cells]
        low = rank < m // 2
        level = np.where(low, policy.p_low, policy.p_high)
        powers[idx] = level[:-1]
        p0 = float(level[-1])
    else:
        raise ConfigError(f"unsupported policy {policy!r}")
    return PowerAssignment(powers=powers, active=active, cell_distance=d, p0=float(p0), r0=r0)


# ---------------------------------------------------------------------------
# power distributions

@dataclass(frozen=True)
class HexPowerLaw:
    """Continuous power ``d**exponent`` with ``d`` the distance of a uniform
    point of a hexagon (side ``side``) to its centre, conditioned on ``d >= d_min``.
    """

    side: float
    exponent: float
    d_min: float
    weight: float

    @property
    def _hex(self) -> HexDistance:
        return HexDistance(self.side)

    @property
    def support(self) -> Tuple[float, float]:
        return self.d_min ** self.exponent, self.side ** self.exponent

    @property
    def breakpoints(self) -> list:
        a = self._hex.apothem
        pts = list(self.support)
        if self.d_min < a:
            pts.append(a ** self.exponent)
        return sorted(pts)

    def _norm(self) -> float:
        return 1.0 - float(self._hex.cdf(self.d_min))

    def moment(self, s: float, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        d_lo = np.maximum(self.d_min, np.maximum(t, 0.0) ** (1.0 / self.exponent))
        return self.weight * self._hex.partial_moment(self.exponent * s, d_lo) / self._norm()

    def pdf(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        k = self.exponent
        d = np.maximum(p, 0.0) ** (1.0 / k)
        jac = d / (k * np.maximum(p, 1e-300))
        lo, hi = self.support
        inside = (p >= lo) & (p <= hi)
        return np.where(inside, self.weight * self._hex.pdf(d) * jac / self._norm(), 0.0)


@dataclass(frozen=True)
class PowerDistribution:
    """Mixed law of a potential mobile's transmit power: atom at 0, further
    atoms and continuous parts on ``[P_lb, P_M]``."""

    zero_mass: float
    atoms: Tuple[Tuple[float, float], ...] = ()
    continuous: Tuple[HexPowerLaw, ...] = ()
    p_max: float = 1.0
    p_lb: float = 0.0

    @property
    def activity(self) -> float:
        return 1.0 - self.zero_mass

    def total_mass(self) -> float:
        return (self.zero_mass + sum(w for _, w in self.atoms)
                + sum(float(c.moment(0.0, 0.0)) for c in self.continuous))

    def moment(self, s: float, t=0.0) -> np.ndarray:
        """``E[P**s ; P > t]``, zero atom excluded."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p, w in self.atoms:
            out = out + np.where(p > t, w * p ** s, 0.0)
        for c in self.continuous:
            out = out + c.moment(s, t)
        return out

    def survival(self, t) -> np.ndarray:
        """P(P > t) for ``t >= 0``."""
        return self.moment(0.0, t)

    def breakpoints(self) -> list:
        pts = [p for p, _ in self.atoms]
        for c in self.continuous:
            pts.extend(c.breakpoints)
        return sorted(set(pts))

    def scaled_activity(self, activity: float) -> "PowerDistribution":
        """Same conditional-on-active law with a different activity probability."""
        f = activity / self.activity
        return PowerDistribution(
            zero_mass=1.0 - activity,
            atoms=tuple((p, w * f) for p, w in self.atoms),
            continuous=tuple(HexPowerLaw(c.side, c.exponent, c.d_min, c.weight * f)
                             for c in self.continuous),
            p_max=self.p_max, p_lb=self.p_lb)


def point_mass(power: float = 1.0, activity: float = 1.0) -> PowerDistribution:
    return PowerDistribution(zero_mass=1.0 - activity, atoms=((power, activity),),
                             p_max=power, p_lb=power)


def fractional_moment(dist: PowerDistribution, alpha: float, t=0.0):
    """``E[P**(2/alpha) ; P > t]``."""
    if not alpha > 2:
        raise ValueError("alpha must exceed 2")
    val = dist.moment(2.0 / alpha, t)
    return float(val) if np.ndim(val) == 0 else val


def power_distribution(policy: Policy, params: ScenarioParams) -> PowerDistribution:
    """Marginal power law of a potential mobile, assuming every cell fills its K slots."""
    act = params.activity
    lb, pm = params.power_bounds
    if isinstance(policy, ConstantPower):
        atoms = ((policy.power, act),)
        cont = ()
    elif isinstance(policy, TwoLevel):
        f_low = (params.K // 2) / params.K
        atoms = tuple((p, w) for p, w in ((policy.p_low, act * f_low),
                                          (policy.p_high, act * (1 - f_low))) if w > 0)
        cont = ()
    elif isinstance(policy, Fractional):
        k = params.alpha * policy.epsilon
        if k == 0:
            atoms, cont = ((1.0, act),), ()
        else:
            atoms = ()
            cont = (HexPowerLaw(params.cell_side, k, policy.d_min, act),)
    else:
        raise ConfigError(f"unsupported policy {policy!r}")
    return PowerDistribution(zero_mass=1.0 - act, atoms=atoms, continuous=cont,
                             p_max=pm, p_lb=lb)


def representative_q_cdf(policy: Policy, params: ScenarioParams) -> Callable:
    """CDF of ``q = P0 * r0**(-alpha)`` for the representative mobile.

    The returned callable carries an ``atoms`` attribute listing the jump
    points of the CDF (empty when it is continuous).
    """
    F = _q_cdf(policy, params)
    if not hasattr(F, "atoms"):
        F.atoms = ()
    return F


def _q_cdf(policy: Policy, params: ScenarioParams) -> Callable:
    alpha = params.alpha
    hx = HexDistance(params.cell_side)

    if isinstance(policy, ConstantPower):
        P = policy.power

        def F(q):
            q = np.asarray(q, dtype=float)
            r_star = (P / np.maximum(q, 1e-300)) ** (1.0 / alpha)
            return np.where(q <= 0, 0.0, 1.0 - hx.cdf(r_star))
        return F

    if isinstance(policy, Fractional):
        e = alpha * (policy.epsilon - 1.0)
        norm = 1.0 - float(hx.cdf(policy.d_min))
        if e == 0:
            def step(q):
                return np.where(np.asarray(q, dtype=float) >= 1.0, 1.0, 0.0)
            step.atoms = (1.0,)
            return step

        def F(q):
            q = np.asarray(q, dtype=float)
            r_star = np.maximum(np.maximum(q, 1e-300) ** (1.0 / e), policy.d_min)
            return np.where(q <= 0, 0.0, (1.0 - hx.cdf(r_star)) / norm)
        return F

    if isinstance(policy, TwoLevel):
        K = params.K
        m = K // 2
        j = np.arange(K)

        def tail(u, js):
            # integral over [u, 1] of P(Bin(K-1, v) = j), summed over js
            u = np.asarray(u, dtype=float)[..., None]
            return np.sum(1.0 - betainc(js + 1, K - js, u), axis=-1) / K

        def F(q):
            q = np.asarray(q, dtype=float)
            qq = np.maximum(q, 1e-300)
            u_low = hx.cdf((policy.p_low / qq) ** (1.0 / alpha))
            u_high = hx.cdf((policy.p_high / qq) ** (1.0 / alpha))
            val = tail(u_low, j[:m]) + tail(u_high, j[m:])
            return np.where(q <= 0, 0.0, val)
        return F

    raise ConfigError(f"unsupported policy {policy!r}")
