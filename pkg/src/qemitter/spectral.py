"""Quasi-static spectral diffusion and PLE lineshapes.

The line centre is frozen within a shot and Gaussian-distributed across
shots with standard deviation ``sqrt(2)/T2*``. Averages over that
distribution use Gauss-Hermite quadrature by default; a seeded Monte-Carlo
ensemble is available as a cross-check.

Note on widths: ``sqrt(2)/T2*`` at T2* = 4.54 ns is a 116.7 MHz FWHM drift.
A standard deviation of ``1/T2*`` would give 82.6 MHz instead.
:func:`drift_fwhm` reports the former because that is what the averaging uses.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_hermite, voigt_profile

from .emitter import EmitterParams
from .errors import DomainError, UsageError

MAX_NODES = 512
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True, eq=False)
class DetuningEnsemble:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.size < 1 or nodes.shape != weights.shape:
            raise UsageError("ensemble needs matching, non-empty nodes and weights")
        if np.any(weights < 0):
            raise UsageError("ensemble weights must be non-negative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise UsageError(f"ensemble weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.size

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.nodes ** k))


SINGLE_NODE = DetuningEnsemble(np.zeros(1), np.ones(1))


def detuning_sigma(t2_star: float) -> float:
    if not t2_star > 0:
        raise DomainError("t2_star must be positive")
    return math.sqrt(2.0) / t2_star


def drift_fwhm(t2_star: float) -> float:
    """FWHM (rad/ns) of the shot-to-shot detuning distribution."""
    return FWHM_PER_SIGMA * detuning_sigma(t2_star)


def gauss_hermite_ensemble(t2_star, n_nodes: int = 64) -> DetuningEnsemble:
    """Gauss-Hermite rule for N(0, (sqrt(2)/T2*)^2); ``t2_star=None`` gives one node."""
    if n_nodes < 1:
        raise UsageError("n_nodes must be >= 1")
    if n_nodes > MAX_NODES:
        raise UsageError(f"n_nodes above {MAX_NODES} is not supported")
    if t2_star is None:
        return SINGLE_NODE
    sigma = detuning_sigma(t2_star)
    x, w = roots_hermite(n_nodes)
    # exact mirror symmetry keeps delta -> -delta symmetric results bit-stable
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return DetuningEnsemble(math.sqrt(2.0) * sigma * x, w / w.sum())


def monte_carlo_ensemble(t2_star, n_draws: int = 4096, seed: int = 0) -> DetuningEnsemble:
    if n_draws < 1:
        raise UsageError("n_draws must be >= 1")
    if t2_star is None:
        return SINGLE_NODE
    rng = np.random.default_rng(seed)
    nodes = rng.normal(0.0, detuning_sigma(t2_star), n_draws)
    return DetuningEnsemble(nodes, np.full(n_draws, 1.0 / n_draws))


def ensemble_for(emitter: EmitterParams, n_nodes: int = 64) -> DetuningEnsemble:
    return gauss_hermite_ensemble(emitter.t2_star, n_nodes)


def inhomogeneous_average(values, ensemble: DetuningEnsemble) -> np.ndarray:
    """Weighted mean over the ensemble.

    ``values`` is either a mapping ``node -> series`` covering every node, or
    an array whose first axis runs over the nodes in ensemble order.
    """
    if isinstance(values, Mapping):
        rows = []
        for node in ensemble.nodes:
            if node in values:
                rows.append(values[node])
            else:
                raise UsageError(f"no evaluation supplied for detuning node {node!r}")
        arr = np.asarray(rows)
    else:
        arr = np.asarray(values)
        if arr.shape[:1] != (len(ensemble),):
            raise UsageError(f"expected {len(ensemble)} node evaluations, got "
                             f"{arr.shape[:1]}")
    return np.tensordot(ensemble.weights, arr, axes=1)


def power_broadened_fwhm(emitter: EmitterParams, s: float) -> float:
    """Single-shot PLE FWHM (rad/ns): homogeneous width times sqrt(1 + s)."""
    if s < 0:
        raise DomainError("saturation parameter must be >= 0")
    return (emitter.gamma0 + 2.0 * emitter.gamma_pd(True)) * math.sqrt(1.0 + s)


def ple_lineshape(emitter: EmitterParams, s: float, inhomogeneous_fwhm: float,
                  grid) -> np.ndarray:
    """Peak-normalised PLE profile on ``grid`` (rad/ns detunings).

    Lorentzian single-shot line convolved with a Gaussian of FWHM
    ``inhomogeneous_fwhm`` (rad/ns); zero width leaves the Lorentzian.
    """
    x = np.asarray(grid, dtype=float)
    if x.size == 0:
        raise UsageError("empty detuning grid")
    if inhomogeneous_fwhm < 0:
        raise DomainError("inhomogeneous FWHM must be >= 0")
    hwhm = 0.5 * power_broadened_fwhm(emitter, s)
    if inhomogeneous_fwhm == 0:
        return hwhm ** 2 / (x ** 2 + hwhm ** 2)
    sigma = inhomogeneous_fwhm / FWHM_PER_SIGMA
    return voigt_profile(x, sigma, hwhm) / voigt_profile(0.0, sigma, hwhm)


def profile_fwhm(grid, values) -> float:
    """FWHM of a single-peaked profile by linear interpolation of half-max crossings."""
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    left = np.nonzero(y[:i] < half)[0]
    right = np.nonzero(y[i:] < half)[0]
    if left.size == 0 or right.size == 0:
        raise UsageError("profile does not fall below half maximum on the grid")
    a, b = left[-1], i + right[0]
    xl = np.interp(half, [y[a], y[a + 1]], [x[a], x[a + 1]])
    xr = np.interp(half, [y[b], y[b - 1]], [x[b], x[b - 1]])
    return float(xr - xl)
