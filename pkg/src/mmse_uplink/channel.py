"""Rayleigh channels, interference covariance and the MMSE output SIR."""

from __future__ import annotations

import numpy as np
from scipy import linalg


class SingularCovarianceError(np.linalg.LinAlgError):
    """The interference covariance is not numerically positive definite."""


def sample_channel(N: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """CN(0, 1) entries; shape ``(N,)`` or ``(N, size)``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    shape = (N,) if size is None else (N, size)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def build_covariance(powers, distances, channels, alpha: float) -> np.ndarray:
    """Sum of ``P_j r_j**-alpha g_j g_j^H`` over the columns of ``channels``."""
    powers = np.asarray(powers, dtype=float)
    distances = np.asarray(distances, dtype=float)
    G = np.asarray(channels)
    if G.ndim == 1:
        G = G[:, None]
    if np.any(distances <= 0):
        raise ValueError("interferer at zero distance")
    if np.any(powers < 0):
        raise ValueError("negative transmit power")
    w = powers * distances ** (-alpha)
    R = (G * w) @ G.conj().T
    return 0.5 * (R + R.conj().T)


def mmse_sir(g0, R, P0: float, r0: float, alpha: float):
    """MMSE output SIR and its normalized form ``N**(-alpha/2) g0^H R^-1 g0``.

    Uses a Cholesky solve; a covariance that is not positive definite raises
    ``SingularCovarianceError``.
    """
    g0 = np.asarray(g0)
    N = len(g0)
    try:
        factor = linalg.cho_factor(R, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(str(exc)) from None
    x = linalg.cho_solve(factor, g0, check_finite=False)
    quad = float(np.real(np.vdot(g0, x)))
    if not np.isfinite(quad) or quad <= 0:
        raise SingularCovarianceError("non-positive quadratic form")
    sir = P0 * r0 ** (-alpha) * quad
    beta_n = N ** (-alpha / 2.0) * quad
    return sir, beta_n


def spectral_efficiency(sir):
    """log2(1 + SIR) in b/s/Hz."""
    return np.log2(1.0 + np.asarray(sir, dtype=float))


def min_eigenvalue_diagnostic(powers, distances, channels, alpha: float) -> float:
    """Smallest eigenvalue of ``(1/N) S Psi S^H`` with ``Psi = N**(alpha/2) P r**-alpha``."""
    G = np.asarray(channels)
    if G.ndim == 1:
        G = G[:, None]
    N = G.shape[0]
    powers = np.asarray(powers, dtype=float)
    distances = np.asarray(distances, dtype=float)
    if G.shape[1] == 0 or not np.any(powers > 0):
        return 0.0
    psi = N ** (alpha / 2.0) * powers * distances ** (-alpha)
    M = (G * psi) @ G.conj().T / N
    lam = linalg.eigvalsh(0.5 * (M + M.conj().T), check_finite=False)
    return float(max(lam[0], 0.0)) if G.shape[1] < N else float(lam[0])
