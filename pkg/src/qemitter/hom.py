"""Two-photon interference of consecutive photons from one dephased emitter.

Both photons are one-sided exponential wavepackets of lifetime T1 with a
random phase. After the ensemble average over phases the joint detection
density on opposite beamsplitter outputs is::

    P(t0, t1) = exp(-(t0 + t1)/T1) / (4 T1^2) * (2 - 2 exp(-2 gamma_pd |t1 - t0|))

with t0, t1 >= 0. Coincidence probabilities integrate it over a
[0, t_max]^2 collection window; visibility compares with h = 0
(distinguishable photons).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DomainError, NumericalError, UsageError

INFINITE = math.inf
_MAX_ORDER = 2048
_TOL = 1e-12
_TAIL_LIFETIMES = 40.0


@dataclass(frozen=True)
class HomConfig:
    t1_lifetime: float
    gamma_pd: float = 0.0
    t_max: float = INFINITE
    quadrature_order: int = 32

    def __post_init__(self):
        if not self.t1_lifetime > 0:
            raise DomainError("t1_lifetime must be positive")
        if self.gamma_pd < 0:
            raise DomainError("gamma_pd must be non-negative")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive (or infinite)")
        if self.quadrature_order < 2:
            raise UsageError("quadrature_order must be >= 2")

    @property
    def gamma0(self):
        return 1.0 / self.t1_lifetime

    @property
    def theta(self):
        return 1.0 + 2.0 * self.gamma_pd * self.t1_lifetime

    def with_window(self, t_max):
        return HomConfig(self.t1_lifetime, self.gamma_pd, t_max, self.quadrature_order)


@dataclass(frozen=True)
class HomResult:
    p_coincidence: float
    p_coincidence_distinguishable: float
    visibility: float
    stderr: float = 0.0


def wavepacket_amplitude(t, t1):
    """Deterministic envelope exp(-t/(2 T1)) / sqrt(T1) for t > 0, else 0."""
    if not t1 > 0:
        raise DomainError("t1 must be positive")
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.exp(-0.5 * np.maximum(t, 0.0) / t1) / math.sqrt(t1), 0.0)


def averaged_joint_probability(t0, t1, config: HomConfig, distinguishable=False):
    """Phase-averaged joint detection density (1/ns^2) on opposite outputs."""
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    T = config.t1_lifetime
    inside = (t0 >= 0) & (t1 >= 0)
    tt0, tt1 = np.maximum(t0, 0.0), np.maximum(t1, 0.0)
    interference = 0.0 if distinguishable else \
        2.0 * np.exp(-2.0 * config.gamma_pd * np.abs(tt1 - tt0))
    val = np.exp(-(tt0 + tt1) / T) / (4.0 * T * T) * (2.0 - interference)
    return np.where(inside, val, 0.0)


def _triangle_integral(config, t_max, order, distinguishable):
    """Twice the integral over the triangle t1 >= t0, in (t0, v = t1 - t0).

    The |t1 - t0| kink sits on the triangle edge, so the integrand is smooth.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    t0 = t_max * x[:, None]
    v = (t_max - t0) * x[None, :]
    jac = t_max * (t_max - t0)
    T = config.t1_lifetime
    interference = 0.0 if distinguishable else 2.0 * np.exp(-2.0 * config.gamma_pd * v)
    f = np.exp(-(2.0 * t0 + v) / T) / (4.0 * T * T) * (2.0 - interference)
    return 2.0 * float(np.sum(w[:, None] * w[None, :] * jac * f))


def coincidence_quadrature(config: HomConfig, distinguishable=False, t_max=None):
    """Gauss-Legendre estimate on a finite window, refined by order doubling."""
    t_max = config.t_max if t_max is None else t_max
    if not math.isfinite(t_max):
        raise UsageError("quadrature needs a finite window")
    # beyond 40 T1 the remaining mass is below exp(-40)
    t_max = min(t_max, _TAIL_LIFETIMES * config.t1_lifetime)
    order = config.quadrature_order
    prev = _triangle_integral(config, t_max, order, distinguishable)
    while order < _MAX_ORDER:
        order *= 2
        cur = _triangle_integral(config, t_max, order, distinguishable)
        if abs(cur - prev) < _TOL:
            return cur
        prev = cur
    raise NumericalError(f"coincidence quadrature not converged at order {order}")


def coincidence_closed_form(config: HomConfig, distinguishable=False):
    """Infinite-window coincidence probability."""
    if distinguishable:
        return 0.5
    g0 = config.gamma0
    return 0.5 * (1.0 - g0 / (g0 + 2.0 * config.gamma_pd))


def coincidence_probability(config: HomConfig, distinguishable=False) -> float:
    if math.isinf(config.t_max):
        return coincidence_closed_form(config, distinguishable)
    return coincidence_quadrature(config, distinguishable)


def visibility(config: HomConfig) -> HomResult:
    p = coincidence_probability(config)
    p_d = coincidence_probability(config, distinguishable=True)
    if not p_d > 0:
        raise DegenerateError("no distinguishable coincidences in the window")
    p = min(max(p, 0.0), p_d)
    return HomResult(p, p_d, 1.0 - p / p_d)


def visibility_vs_theta(theta_grid, t1, t_max=INFINITE, quadrature_order=32):
    """Visibility against the normalised linewidth theta = 1 + 2 gamma_pd T1."""
    thetas = np.asarray(theta_grid, dtype=float)
    if np.any(thetas < 1):
        raise DomainError("theta must be >= 1")
    return np.array([
        visibility(HomConfig(t1, (th - 1.0) / (2.0 * t1), t_max, quadrature_order)).visibility
        for th in thetas])


def visibility_vs_window(t_max_grid, config: HomConfig):
    tm = np.asarray(t_max_grid, dtype=float)
    if np.any(tm <= 0):
        raise DomainError("collection windows must be positive")
    return np.array([visibility(config.with_window(t)).visibility for t in tm])


def window_fraction(t_max, t1):
    """Fraction of an exponential decay collected within [0, t_max]."""
    return -math.expm1(-t_max / t1)


def mc_phase_oracle(config: HomConfig, n_trajectories: int = 1_000_000, seed: int = 0,
                    chunk: int = 1 << 17) -> HomResult:
    """Monte-Carlo visibility from explicit Wiener phases.

    Each trajectory draws detection times from the (windowed) distinguishable
    density and independent Wiener phase increments of variance
    ``2 gamma_pd |t1 - t0|`` for each photon. The visibility estimator is the
    mean of cos(dPhi1 - dPhi2). Chunks use spawned seed streams so the result
    does not depend on how the work is split.
    """
    if n_trajectories < 1:
        raise UsageError("need at least one trajectory")
    T = config.t1_lifetime
    frac = 1.0 if math.isinf(config.t_max) else window_fraction(config.t_max, T)
    n_chunks = -(-n_trajectories // chunk)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    total, total_sq = 0.0, 0.0
    for k, ss in enumerate(streams):
        m = min(chunk, n_trajectories - k * chunk)
        rng = np.random.default_rng(ss)
        u = rng.random((2, m))
        # inverse CDF of the exponential truncated to the window
        t = -T * np.log1p(-u * frac)
        var = 2.0 * config.gamma_pd * np.abs(t[1] - t[0])
        dphi = rng.standard_normal((2, m)) * np.sqrt(var)
        c = np.cos(dphi[0] - dphi[1])
        total += float(c.sum())
        total_sq += float((c * c).sum())
    mean = total / n_trajectories
    var_c = max(total_sq / n_trajectories - mean * mean, 0.0)
    stderr = math.sqrt(var_c / n_trajectories)
    p_d = 0.5 * frac * frac
    return HomResult(p_d * (1.0 - mean), p_d, mean, stderr)
