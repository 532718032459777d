"""Gaussian noise calibration for load obfuscation, and normal quantiles.

The per-line noise scale that makes the randomized dispatch
(epsilon, delta)-differentially private for load datasets that may differ
at one node by up to beta is

    sigma_l = beta_l * sqrt(2 * ln(1.25 / delta)) / epsilon

with epsilon restricted to (0, 1].  ``z_quantile`` supplies the standard
normal quantiles used by the chance-constrained dispatch layer; it combines
a rational approximation with one Halley refinement against ``math.erfc``
and is accurate to ~1e-15 relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_model import GridError, RadialGrid

__all__ = [
    "PrivacyError",
    "PrivacySpec",
    "adjacent_dataset",
    "calibrate_sigma",
    "cvar_factor",
    "default_delta",
    "gaussian_sigma",
    "z_quantile",
]


class PrivacyError(ValueError):
    """Privacy parameters outside the valid domain."""


def default_delta(grid: RadialGrid) -> float:
    """Default failure probability: one over the number of customer nodes."""
    n = grid.node_count - 1
    if n < 1:
        raise PrivacyError("delta default needs at least one customer node")
    return 1.0 / n


def _check_epsilon_delta(epsilon: float, delta: float) -> None:
    if not 0.0 < epsilon <= 1.0:
        raise PrivacyError(
            "epsilon must lie in (0, 1] for the Gaussian noise mechanism, "
            f"got {epsilon}"
        )
    if not 0.0 < delta < 1.0:
        raise PrivacyError(f"delta must lie in (0, 1), got {delta}")


def gaussian_sigma(beta, epsilon: float, delta: float):
    """Noise std beta * sqrt(2 ln(1.25/delta)) / epsilon; shape follows beta."""
    _check_epsilon_delta(epsilon, delta)
    beta_arr = np.asarray(beta, dtype=float)
    if (beta_arr < 0).any():
        raise PrivacyError("beta must be non-negative")
    sigma = beta_arr * (math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon)
    if beta_arr.ndim == 0:
        return float(sigma)
    return sigma


@dataclass(frozen=True)
class PrivacySpec:
    """Privacy requirement and the per-line noise it induces.

    ``beta`` holds per-line adjacency magnitudes (MW): two load
    datasets are adjacent when they differ at the head node of a single
    line by at most that line's beta.  ``sigma`` is the per-line noise
    std; it must be at least the Gaussian-mechanism bound
    beta*sqrt(2 ln(1.25/delta))/epsilon componentwise (equality when
    built by :func:`calibrate_sigma`), and lines with beta = 0 carry no
    noise.
    """

    epsilon: float
    delta: float
    beta: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self) -> None:
        _check_epsilon_delta(self.epsilon, self.delta)
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1:
            raise PrivacyError("beta must be a one-dimensional per-line array")
        if (beta < 0).any():
            raise PrivacyError("beta entries must be non-negative")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

        floor = gaussian_sigma(beta, self.epsilon, self.delta)
        if self.sigma is None:
            sigma = floor
        else:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != beta.shape:
                raise PrivacyError("sigma must match beta's shape")
            # Allow a whisker of rounding below the bound, nothing more.
            if (sigma < floor * (1.0 - 1e-12)).any():
                raise PrivacyError(
                    "sigma is below the Gaussian-mechanism bound "
                    "beta*sqrt(2 ln(1.25/delta))/epsilon on at least one line"
                )
            if ((beta == 0) & (sigma != 0)).any():
                raise PrivacyError("lines with beta = 0 must have sigma = 0")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def line_count(self) -> int:
        return self.beta.shape[0]

    @property
    def noise_multiplier(self) -> float:
        """sigma / beta implied by (epsilon, delta)."""
        return math.sqrt(2.0 * math.log(1.25 / self.delta)) / self.epsilon


def calibrate_sigma(epsilon: float, delta: float, beta) -> PrivacySpec:
    """Calibrate per-line noise: sigma = beta * sqrt(2 ln(1.25/delta)) / epsilon.

    ``beta`` is the per-line adjacency vector (MW).  The returned
    spec carries sigma at the bound with equality.  Raises
    :class:`PrivacyError` outside the domain epsilon in (0, 1],
    delta in (0, 1), beta >= 0.
    """
    beta_arr = np.atleast_1d(np.asarray(beta, dtype=float))
    return PrivacySpec(epsilon=epsilon, delta=delta, beta=beta_arr)


def adjacent_dataset(grid: RadialGrid, node: int, direction: int, beta_i: float) -> RadialGrid:
    """Neighbouring load dataset: one node's active load shifted by +/- beta_i.

    ``direction`` must be +1 or -1; the shifted load must stay non-negative.
    The reactive load follows automatically through tan_phi.  Used by the
    sensitivity and privacy-falsification oracles.
    """
    if direction not in (-1, 1):
        raise PrivacyError(f"direction must be +1 or -1, got {direction}")
    if beta_i < 0:
        raise PrivacyError(f"beta must be non-negative, got {beta_i}")
    if not 1 <= node < grid.node_count:
        raise GridError(
            f"node {node}: adjacency is defined on customer nodes 1..{grid.node_count - 1}"
        )
    d_new = float(grid.d_p[node]) + direction * beta_i
    if d_new < 0:
        raise PrivacyError(
            f"node {node}: shifting the load by {direction * beta_i} makes it negative"
        )
    return grid.with_load(node, d_new)


# --- standard normal quantiles ----------------------------------------------

# Coefficients of the rational approximation to the inverse normal CDF
# (relative error < 1.15e-9 on its own, driven to machine precision below
# by one Halley step against erfc).
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_ppf(p: float) -> float:
    """Inverse standard normal CDF for p in (0, 1)."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # One Halley refinement: the residual of Phi(x) - p has derivative phi(x);
    # the update below is exact through second order.
    e = 0.5 * math.erfc(-x / _SQRT2) - p
    u = e * _SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def z_quantile(eta: float) -> float:
    """Safety factor z = Phi^{-1}(1 - eta) for a violation level eta in (0, 1)."""
    if not 0.0 < eta < 1.0:
        raise PrivacyError(f"violation level eta must lie in (0, 1), got {eta}")
    if eta == 0.5:
        return 0.0
    if eta < 0.5:
        # -Phi^{-1}(eta) equals Phi^{-1}(1 - eta) exactly and avoids the
        # rounding loss of forming 1 - eta for small eta.
        return -_norm_ppf(eta)
    return _norm_ppf(1.0 - eta)


def cvar_factor(varrho: float) -> float:
    """Ratio CVaR/std for a centred normal: phi(Phi^{-1}(1-varrho)) / varrho.

    The conditional value-at-risk of N(mu, s) at level varrho equals
    mu + cvar_factor(varrho) * s.
    """
    if not 0.0 < varrho < 1.0:
        raise PrivacyError(f"CVaR level must lie in (0, 1), got {varrho}")
    z = z_quantile(varrho)
    return math.exp(-0.5 * z * z) / _SQRT_2PI / varrho
