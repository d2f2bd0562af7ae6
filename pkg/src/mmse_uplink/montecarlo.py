"""Trial orchestration, deterministic seeding and empirical statistics."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg
from threadpoolctl import threadpool_limits

from .channel import SingularCovarianceError, build_covariance, mmse_sir, sample_channel
from .geometry import HexLattice, build_lattice, sample_mobiles
from .params import ScenarioParams
from .powerctl import assign_powers


class AllTrialsRejected(RuntimeError):
    pass


@dataclass
class TrialResult:
    sir: float
    se: float
    beta_n: float
    actives: int
    min_eig: float
    rejected: bool
    p0: float = math.nan
    r0: float = math.nan
    psi: Optional[np.ndarray] = field(default=None, repr=False)


def trial_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for trial ``index``; depends only on ``(master_seed, index)``."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def run_trial(params: ScenarioParams, seed, lattice: Optional[HexLattice] = None, *,
              keep_psi: bool = False) -> TrialResult:
    """One network realization: geometry, powers, channels, MMSE SIR."""
    rng = np.random.default_rng(seed)
    if lattice is None:
        lattice = build_lattice(params.rho_c, params.R)
    alpha, N = params.alpha, params.N
    net = sample_mobiles(params, rng, lattice)
    pa = assign_powers(params.policy, net, lattice, rng, alpha=alpha, K=params.K)
    pa.check(net, params.K, *params.power_bounds)

    idx = np.flatnonzero(pa.active)
    P = pa.powers[idx]
    r = net.distances_to_origin[idx]
    g0 = sample_channel(N, rng)
    G = sample_channel(N, rng, size=len(idx))
    R = build_covariance(P, r, G, alpha)
    lam = linalg.eigvalsh(R, subset_by_index=[0, 0], check_finite=False)
    min_eig = float(lam[0]) * N ** (alpha / 2.0 - 1.0)
    psi = N ** (alpha / 2.0) * P * r ** (-alpha) if keep_psi else None
    try:
        sir, beta_n = mmse_sir(g0, R, pa.p0, pa.r0, alpha)
        rejected = False
    except SingularCovarianceError:
        sir = beta_n = math.nan
        rejected = True
    return TrialResult(sir=sir, se=math.log2(1.0 + sir) if not rejected else math.nan,
                       beta_n=beta_n, actives=len(idx), min_eig=min_eig, rejected=rejected,
                       p0=pa.p0, r0=pa.r0, psi=psi)


def sample_received_powers(params: ScenarioParams, seed, lattice: Optional[HexLattice] = None
                           ) -> EmpiricalEDF:
    """e.d.f. ``H_n`` of ``N**(alpha/2) P_i r_i**-alpha`` over the ``n`` potential mobiles.

    Geometry and power control only; no channels are drawn. Silent mobiles
    contribute the zero atom.
    """
    rng = np.random.default_rng(seed)
    if lattice is None:
        lattice = build_lattice(params.rho_c, params.R)
    net = sample_mobiles(params, rng, lattice)
    pa = assign_powers(params.policy, net, lattice, rng, alpha=params.alpha, K=params.K)
    idx = np.flatnonzero(pa.active)
    psi = params.N ** (params.alpha / 2.0) * pa.powers[idx] * net.distances_to_origin[idx] ** (
        -params.alpha)
    return empirical_edf(psi, n_total=max(params.n, len(psi)))


def _run_chunk(args):
    params, lattice, master_seed, indices = args
    with threadpool_limits(limits=1):
        return [run_trial(params, trial_seed(master_seed, i), lattice, keep_psi=(i == 0))
                for i in indices]


@dataclass
class EmpiricalEDF:
    """Right-continuous step CDF of ``values`` plus ``n_zero`` samples at 0."""

    values: np.ndarray
    n_zero: int = 0

    def __post_init__(self):
        self.values = np.sort(np.asarray(self.values, dtype=float))

    @property
    def n(self) -> int:
        return len(self.values) + self.n_zero

    @property
    def points(self) -> np.ndarray:
        pts = self.values
        return np.append(0.0, pts) if self.n_zero else pts

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        cnt = np.searchsorted(self.values, x, side="right") + np.where(x >= 0, self.n_zero, 0)
        return cnt / self.n

    def left(self, x):
        """Left limit ``G(x-)``."""
        x = np.asarray(x, dtype=float)
        cnt = np.searchsorted(self.values, x, side="left") + np.where(x > 0, self.n_zero, 0)
        return cnt / self.n


def empirical_edf(samples, n_total: Optional[int] = None) -> EmpiricalEDF:
    """E.d.f. of ``samples``; ``n_total - len(samples)`` extra samples sit at zero."""
    samples = np.asarray(samples, dtype=float)
    if n_total is None:
        n_total = len(samples)
    if n_total < 1 or n_total < len(samples):
        raise ValueError("need at least one sample and n_total >= len(samples)")
    return EmpiricalEDF(samples, n_zero=n_total - len(samples))


def ks_distance(F: Callable, G: EmpiricalEDF, extra_points: Sequence[float] = ()) -> float:
    """``sup |F - G|`` over the jump points of ``G`` (and of ``F`` if given), both sides."""
    pts = np.unique(np.concatenate([G.points, np.asarray(extra_points, dtype=float)]))
    eps = 1e-12 * np.maximum(1.0, np.abs(pts))
    right = np.abs(np.asarray(F(pts), dtype=float) - G(pts))
    left = np.abs(np.asarray(F(pts - eps), dtype=float) - G.left(pts))
    return float(max(right.max(initial=0.0), left.max(initial=0.0)))


@dataclass
class ExperimentSummary:
    params: ScenarioParams
    master_seed: int
    results: List[TrialResult]
    psi_edf: Optional[EmpiricalEDF] = None

    @property
    def accepted(self) -> List[TrialResult]:
        return [t for t in self.results if not t.rejected]

    @property
    def rejection_count(self) -> int:
        return sum(t.rejected for t in self.results)

    @property
    def se(self) -> np.ndarray:
        return np.array([t.se for t in self.accepted])

    @property
    def mean_se(self) -> float:
        return float(np.mean(self.se))

    @property
    def std_se(self) -> float:
        se = self.se
        return float(np.std(se, ddof=1)) if len(se) > 1 else 0.0

    @property
    def beta_n(self) -> np.ndarray:
        return np.array([t.beta_n for t in self.accepted])

    @property
    def ecdf(self) -> np.ndarray:
        return np.sort(self.se)

    def se_edf(self) -> EmpiricalEDF:
        return EmpiricalEDF(self.se)

    def summary_dict(self) -> dict:
        p = self.params
        return {
            "policy": p.policy.describe(),
            "N": p.N,
            "n": p.n,
            "c": p.c,
            "trials": len(self.results),
            "rejected": self.rejection_count,
            "mean_se": self.mean_se,
            "std_se": self.std_se,
            "mean_beta_n": float(np.mean(self.beta_n)),
            "min_eig_positive_fraction": float(np.mean([t.min_eig > 0 for t in self.results])),
            "master_seed": self.master_seed,
            "ecdf": self.ecdf.tolist(),
        }


def expected_active_interferers(params: ScenarioParams) -> float:
    return params.K * math.pi * params.R ** 2 * params.rho_c - 1


def run_experiment(params: ScenarioParams, n_trials: int, master_seed: int,
                   workers: int = 1) -> ExperimentSummary:
    """Run ``n_trials`` independent trials; output does not depend on ``workers``."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if expected_active_interferers(params) < params.N:
        warnings.warn("fewer active interferers than antennas expected: "
                      "most trials will have a singular covariance", RuntimeWarning)
    lattice = build_lattice(params.rho_c, params.R)
    indices = list(range(n_trials))
    if workers <= 1:
        results = _run_chunk((params, lattice, master_seed, indices))
    else:
        size = max(1, math.ceil(n_trials / (4 * workers)))
        chunks = [indices[i:i + size] for i in range(0, n_trials, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_run_chunk, [(params, lattice, master_seed, ch) for ch in chunks])
            results = [t for part in parts for t in part]
    if all(t.rejected for t in results):
        raise AllTrialsRejected(f"all {n_trials} trials had a singular interference covariance")
    first = results[0]
    psi_edf = None
    if first.psi is not None:
        psi_edf = empirical_edf(first.psi, n_total=max(params.n, len(first.psi)))
        first.psi = None
    return ExperimentSummary(params=params, master_seed=master_seed, results=results,
                             psi_edf=psi_edf)


def trial_rows(summary: ExperimentSummary) -> List[dict]:
    rows = []
    for i, t in enumerate(summary.results):
        d = asdict(t)
        d.pop("psi")
        rows.append({"trial": i, **d})
    return rows
