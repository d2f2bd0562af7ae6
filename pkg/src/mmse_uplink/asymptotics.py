"""Large-system limits of the normalized MMSE SIR.

The normalized SIR ``beta_N = N**(-alpha/2) g0^H R^-1 g0`` converges to the
root ``beta`` of a scalar fixed-point equation. Two independent routes to
``beta`` live here:

* ``solve_beta``: the closed-form Stieltjes integral (the ``csc`` term) minus a
  finite-network correction integrated in ``tau`` after the substitution
  ``tau = u**(alpha/(alpha-2))``;
* ``lemma1_oracle``: the generic fixed point ``1 = gamma c int tau/(1+tau gamma) dH``
  integrated by parts against the limiting e.d.f. ``H`` of the received powers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import hyp2f1

from .params import ScenarioParams
from .powerctl import PowerDistribution, fractional_moment


class SolverError(RuntimeError):
    """Root finding or quadrature failed."""


@dataclass(frozen=True)
class AsymptoticParams:
    alpha: float
    rho_m: float
    c: float

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValueError("alpha must exceed 2")
        if not (self.rho_m > 0 and self.c > 0):
            raise ValueError("rho_m and c must be positive")

    @classmethod
    def from_scenario(cls, params: ScenarioParams) -> "AsymptoticParams":
        return cls(alpha=params.alpha, rho_m=params.rho_m, c=params.c)

    @property
    def upper_limit(self) -> float:
        """``(pi rho_m / c)**(alpha/2)``; multiply by ``P_M`` for the tau range."""
        return (math.pi * self.rho_m / self.c) ** (self.alpha / 2.0)


@dataclass(frozen=True)
class AsymptoticSolution:
    beta: float
    method: str
    alpha: float
    rho_m: float
    c: float
    moment: float  # E[P^(2/alpha)]
    p_max: float
    residual: float = 0.0


def _quad(f, a, b, points=None, epsabs=1e-13, epsrel=1e-12, accept_rel=1e-8):
    """``scipy.integrate.quad`` that tolerates warnings only if the error estimate is small."""
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=400)
    if points:
        kw["points"] = points
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, **kw)
    if caught and err > max(epsabs, accept_rel * abs(val)):
        raise SolverError(f"quadrature did not converge on [{a}, {b}]: value {val:.6e}, "
                          f"error estimate {err:.2e}")
    return val, err


def second_term(beta: float, ap: AsymptoticParams, dist: PowerDistribution) -> float:
    """Finite-``c`` correction subtracted from the closed-form part of the fixed point.

    ``(beta/alpha) int_0^T tau**(-2/alpha) / (1 + tau beta) M(tau kappa) dtau`` with
    ``M(t) = E[P**(2/alpha); P > t]``, ``kappa = (c/(pi rho_m))**(alpha/2)`` and
    ``T = P_M / kappa``.
    """
    al = ap.alpha
    inv_kappa = ap.upper_limit
    T = dist.p_max * inv_kappa
    if T <= 0:
        return 0.0
    e = al / (al - 2.0)
    jac = al / (al - 2.0)
    kappa = 1.0 / inv_kappa

    def g(u):
        tau = u ** e
        return jac * float(fractional_moment(dist, al, tau * kappa)) / (1.0 + tau * beta)

    uT = T ** (1.0 / e)
    taus = [p * inv_kappa for p in dist.breakpoints()]
    # the kernel varies on the scale 1/beta
    taus += [10.0 ** k / beta for k in range(-3, 4)]
    pts = sorted({t ** (1.0 / e) for t in taus if 0 < t < T})
    val, _ = _quad(g, 0.0, uT, points=pts or None)
    return beta / al * val


def theorem1_residual(beta: float, ap: AsymptoticParams, dist: PowerDistribution) -> float:
    """Left side of the fixed-point equation minus ``1/(2 pi rho_m)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    al = ap.alpha
    m0 = fractional_moment(dist, al, 0.0)
    first = m0 * beta ** (2.0 / al) * (math.pi / al) / math.sin(2.0 * math.pi / al)
    return first - second_term(beta, ap, dist) - 1.0 / (2.0 * ap.rho_m * math.pi)


def beta_closed_form(ap: AsymptoticParams, dist: PowerDistribution) -> AsymptoticSolution:
    """Large-``c`` limit ``[alpha sin(2 pi/alpha) / (2 pi^2 rho_m E[P^(2/alpha)])]^(alpha/2)``."""
    al = ap.alpha
    m0 = fractional_moment(dist, al, 0.0)
    beta = (al * math.sin(2 * math.pi / al) / (2 * math.pi ** 2 * ap.rho_m * m0)) ** (al / 2)
    return AsymptoticSolution(beta=beta, method="closed_form", alpha=al, rho_m=ap.rho_m,
                              c=ap.c, moment=m0, p_max=dist.p_max)


def solve_beta(ap: AsymptoticParams, dist: PowerDistribution, *,
               rtol: float = 1e-10, max_expansions: int = 200) -> AsymptoticSolution:
    """Root of ``theorem1_residual``, bracketed upward from the closed-form value."""
    seed = beta_closed_form(ap, dist)
    f = lambda b: theorem1_residual(b, ap, dist)  # noqa: E731
    lo = seed.beta
    f_lo = f(lo)
    if f_lo >= 0:
        # correction numerically zero: the closed form is the root
        return AsymptoticSolution(**{**seed.__dict__, "method": "fixed_point",
                                     "residual": f_lo})
    hi = lo
    for _ in range(max_expansions):
        hi = lo * 2.0
        if f(hi) > 0:
            break
        lo = hi
    else:
        raise SolverError(
            f"no sign change up to beta={hi:.3e} (residual {f(hi):.3e}); "
            "c times the activity probability may not exceed 1")
    beta = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps),
                           maxiter=500)
    scan = [f(b) for b in np.linspace(lo, hi, 9)]
    if np.any(np.diff(scan) <= 0):
        raise SolverError("residual not increasing over the bracket; root may not be unique")
    return AsymptoticSolution(beta=beta, method="fixed_point", alpha=ap.alpha, rho_m=ap.rho_m,
                              c=ap.c, moment=seed.moment, p_max=dist.p_max, residual=f(beta))


def correction_bound(beta: float, ap: AsymptoticParams, dist: PowerDistribution) -> float:
    """Upper bound on ``second_term`` obtained by replacing ``M`` with ``P_M**(2/alpha)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    al = ap.alpha
    T = dist.p_max * ap.upper_limit
    if T <= 0:
        return 0.0
    s = 1.0 - 2.0 / al
    integral = T ** s / s * hyp2f1(1.0, s, 1.0 + s, -beta * T)
    return beta / al * dist.p_max ** (2.0 / al) * integral


def _closed_sir_scale(N, ap: AsymptoticParams, dist: PowerDistribution):
    return np.asarray(N, dtype=float) ** (ap.alpha / 2.0) * beta_closed_form(ap, dist).beta


def asymptotic_se(P0, r0, N, ap: AsymptoticParams, dist: PowerDistribution):
    """Large-system spectral efficiency ``log2(1 + P0 r0**-alpha N**(alpha/2) beta)``."""
    q = np.asarray(P0, dtype=float) * np.asarray(r0, dtype=float) ** (-ap.alpha)
    return np.log2(1.0 + q * _closed_sir_scale(N, ap, dist))


def se_cdf(gamma, F_q: Callable, N, ap: AsymptoticParams, dist: PowerDistribution):
    """Approximate CDF of the spectral efficiency through the law of ``q = P0 r0**-alpha``."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("spectral efficiency must be non-negative")
    return F_q((2.0 ** gamma - 1.0) / _closed_sir_scale(N, ap, dist))


def se_quantile(p: float, F_q: Callable, N, ap: AsymptoticParams, dist: PowerDistribution,
                tol: float = 1e-10) -> float:
    """Smallest ``gamma`` with ``se_cdf(gamma) >= p``, by bisection."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    F = lambda g: float(se_cdf(g, F_q, N, ap, dist))  # noqa: E731
    lo, hi = 0.0, 1.0
    while F(hi) < p:
        lo, hi = hi, 2 * hi
        if hi > 1e4:
            raise SolverError(f"spectral-efficiency quantile {p} not reached")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if F(mid) >= p:
            hi = mid
        else:
            lo = mid
    return hi


def asymptotic_mean_se(F_q: Callable, N, ap: AsymptoticParams, dist: PowerDistribution,
                       q_atoms=()) -> float:
    """Mean of the approximate spectral-efficiency law, ``int_0^inf (1 - CDF) dgamma``.

    ``q_atoms`` lists jump points of ``F_q`` so the quadrature can split there.
    The tail beyond the ``1 - 1e-13`` quantile is dropped; it decays exponentially
    in ``gamma``.
    """
    scale = float(_closed_sir_scale(N, ap, dist))
    top = se_quantile(1 - 1e-13, F_q, N, ap, dist)
    pts = sorted(g for g in (float(np.log2(1 + q * scale)) for q in q_atoms) if 0 < g < top)
    edges = [0.0] + pts + [top]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = _quad(lambda g: 1.0 - float(se_cdf(g, F_q, N, ap, dist)), a, b,
                       epsabs=1e-10, epsrel=1e-10, accept_rel=1e-6)
        total += val
    return total


@dataclass(frozen=True)
class LimitingEDF:
    """Limit ``H`` of the e.d.f. of ``N**(alpha/2) P_i r_i**-alpha``.

    With ``pi_factor=False`` the coefficient ``rho_m/c`` is used instead of
    ``pi rho_m/c``; that variant is kept for comparison only.
    """

    ap: AsymptoticParams
    dist: PowerDistribution
    pi_factor: bool = True

    @property
    def coef(self) -> float:
        return (math.pi if self.pi_factor else 1.0) * self.ap.rho_m / self.ap.c

    @property
    def threshold_scale(self) -> float:
        """``t = x * threshold_scale`` is the power above which ``min(1, ...)`` saturates."""
        return (self.ap.c / (math.pi * self.ap.rho_m)) ** (self.ap.alpha / 2.0)

    @property
    def mass(self) -> float:
        """``1 - H(0)``: the fraction of received powers that are positive."""
        return self.dist.activity

    def survival(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        al = self.ap.alpha
        pos = np.maximum(x, 1e-300)
        t = pos * self.threshold_scale
        m0 = fractional_moment(self.dist, al, 0.0)
        mt = np.asarray(fractional_moment(self.dist, al, t))
        val = self.coef * pos ** (-2.0 / al) * (m0 - mt) + self.dist.survival(t)
        return np.where(x < 0, 1.0, np.where(x == 0, self.dist.activity, val))

    def __call__(self, x) -> np.ndarray:
        return 1.0 - self.survival(x)

    def breakpoints(self) -> list:
        """Arguments ``x`` at which ``H`` has kinks or jumps."""
        return [p / self.threshold_scale for p in self.dist.breakpoints() if p > 0]


def limiting_edf(ap: AsymptoticParams, dist: PowerDistribution, *,
                 pi_factor: bool = True) -> LimitingEDF:
    return LimitingEDF(ap=ap, dist=dist, pi_factor=pi_factor)


_GL_LO = np.polynomial.legendre.leggauss(48)
_GL_HI = np.polynomial.legendre.leggauss(96)


def _gauss_adaptive(f, a: float, b: float, rtol: float = 1e-13, atol: float = 1e-16,
                    depth: int = 0) -> float:
    """Vectorised Gauss-Legendre with 48/96-point comparison and bisection."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    lo = half * np.dot(_GL_LO[1], f(mid + half * _GL_LO[0]))
    hi = half * np.dot(_GL_HI[1], f(mid + half * _GL_HI[0]))
    if abs(hi - lo) <= max(atol, rtol * abs(hi)):
        return hi
    if depth > 40:
        raise SolverError(f"Gauss-Legendre failed on [{a}, {b}]: error estimate {abs(hi - lo):.2e}")
    return (_gauss_adaptive(f, a, mid, rtol, atol / 2, depth + 1)
            + _gauss_adaptive(f, mid, b, rtol, atol / 2, depth + 1))


def lemma1_oracle(H: LimitingEDF, c: float | None = None) -> float:
    """Root of ``1 = gamma c int tau/(1+tau gamma) dH(tau)``.

    ``H`` may be any object with ``survival(x)``, ``breakpoints()`` and
    ``mass``; ``c`` defaults to ``H.ap.c``.

    The Stieltjes integral is evaluated by parts as
    ``int_0^inf (1 - H(tau)) gamma / (1 + tau gamma)**2 dtau``, piecewise
    between the kinks of ``H`` with adaptive Gauss-Legendre, the tail
    ``[L, inf)`` being mapped to ``(0, 1]`` by ``tau = L / w**2``.
    """
    c = H.ap.c if c is None else c
    kinks = [x for x in H.breakpoints() if x > 0]

    def excess(g):
        f = lambda tau: H.survival(tau) * g / (1.0 + tau * g) ** 2  # noqa: E731
        # the kernel varies on the scale 1/g
        pos = sorted(set(kinks + [10.0 ** k / g for k in range(-3, 4)]))
        # keep consecutive edges within a factor 10 so every piece is single-scale
        fine = [pos[0]]
        for x in pos[1:]:
            steps = int(math.ceil(math.log10(x / fine[-1])))
            fine.extend(fine[-1] * (x / fine[-1]) ** (np.arange(1, steps + 1) / steps))
        edges = [0.0] + fine
        total = sum(_gauss_adaptive(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
        L = edges[-1]

        def tail(w):
            w = np.maximum(w, 1e-300)
            return f(L / w ** 2) * 2.0 * L / w ** 3
        total += _gauss_adaptive(tail, 0.0, 1.0)
        return c * total - 1.0

    if c * H.mass <= 1.0:
        raise SolverError("fixed point not bracketed: c times the mass of H above 0 must exceed 1")
    lo = 1.0
    while excess(lo) >= 0:
        lo *= 0.5
    hi = 2.0 * lo
    for _ in range(400):
        if excess(hi) > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SolverError("fixed point not bracketed after 400 expansions")
    return optimize.brentq(excess, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=500)
