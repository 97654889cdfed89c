"""Experimental-imperfection algebra for HOM and HBT measurements.

Beamsplitters are lossless with ``T + R = 1``; the imbalance
``delta_i = T_i - 1/2`` is always derived, never stored.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .emitter import TimeTrace
from .errors import DegenerateError, DomainError, UsageError

_NORM_TOL = 1e-12


def _check_split(t, r):
    if not (0 <= t <= 1 and 0 <= r <= 1) or abs(t + r - 1.0) > _NORM_TOL:
        raise DomainError(f"beamsplitter T={t}, R={r} is not a lossless split")


@dataclass(frozen=True)
class InterferometerModel:
    bs1_transmission: float = 0.5
    bs1_reflection: float = 0.5
    bs2_transmission: float = 0.5
    bs2_reflection: float = 0.5
    epsilon: float = 0.0
    g2_zero: float = 0.0

    def __post_init__(self):
        _check_split(self.bs1_transmission, self.bs1_reflection)
        _check_split(self.bs2_transmission, self.bs2_reflection)
        if not 0 <= self.epsilon <= 1:
            raise DomainError("epsilon must lie in [0, 1]")
        if self.g2_zero < 0:
            raise DomainError("g2(0) must be non-negative")

    @classmethod
    def from_imbalance(cls, delta1=0.0, delta2=0.0, epsilon=0.0, g2_zero=0.0):
        return cls(0.5 + delta1, 0.5 - delta1, 0.5 + delta2, 0.5 - delta2, epsilon, g2_zero)

    @property
    def delta1(self):
        return self.bs1_transmission - 0.5

    @property
    def delta2(self):
        return self.bs2_transmission - 0.5


def p_parallel_ideal_bs(t2: float, r2: float) -> float:
    """Coincidence probability (T2 - R2)^2 for perfectly indistinguishable photons."""
    _check_split(t2, r2)
    return (t2 - r2) ** 2


def p_parallel_partial(epsilon, v_intrinsic, t2, r2) -> float:
    """Imbalanced recombination splitter with classical visibility 1 - epsilon."""
    _check_split(t2, r2)
    rt = r2 * t2
    return 1.0 - 2.0 * rt - 2.0 * (1.0 - epsilon) ** 2 * v_intrinsic * rt


def p_parallel_full(model: InterferometerModel, v_intrinsic: float) -> float:
    """Both splitters imbalanced, finite classical visibility and multi-photon g2(0).

    Pass ``v_intrinsic=0`` for the perpendicular configuration.
    """
    rt1 = model.bs1_reflection * model.bs1_transmission
    rt2 = model.bs2_reflection * model.bs2_transmission
    inner = 1.0 - 2.0 * rt2 - 2.0 * (1.0 - model.epsilon) ** 2 * v_intrinsic * rt2
    return 4.0 * (rt1 * inner + 2.0 * model.g2_zero * (1.0 - 2.0 * rt1) * rt2)


def p_perpendicular_full(model: InterferometerModel) -> float:
    return p_parallel_full(model, 0.0)


def raw_visibility(p_parallel: float, p_perpendicular: float) -> float:
    if p_perpendicular == 0:
        raise DegenerateError("perpendicular coincidence probability is zero")
    return 1.0 - p_parallel / p_perpendicular


def _correction_factor(epsilon, g2_zero, delta2):
    if epsilon >= 1:
        raise DomainError("epsilon must be < 1")
    return (1.0 + 2.0 * g2_zero) * (1.0 + 8.0 * delta2 ** 2) / (1.0 - epsilon) ** 2


def corrected_visibility(v_raw, epsilon, g2_zero, delta2) -> float:
    """Intrinsic indistinguishability from a raw visibility (small-imperfection limit)."""
    return _correction_factor(epsilon, g2_zero, delta2) * v_raw


def raw_from_intrinsic(v, epsilon, g2_zero, delta2) -> float:
    """Inverse of :func:`corrected_visibility`."""
    return v / _correction_factor(epsilon, g2_zero, delta2)


def g2_from_sbr(b: float) -> float:
    """Background-limited g2(0) = 2/b; only meaningful for b >> 1."""
    if not b > 0:
        raise DomainError("signal-to-background ratio must be positive")
    return 2.0 / b


def _window_sum(trace: TimeTrace, start, end):
    lo = np.clip(trace.bin_edges[:-1], start, end)
    hi = np.clip(trace.bin_edges[1:], start, end)
    return float(np.sum(trace.counts * (hi - lo)))


def signal_to_background(on_trace: TimeTrace, off_trace: TimeTrace, window) -> float:
    """(on - off)/off of count densities integrated over ``window`` (ns).

    Bins partially inside the window contribute in proportion to their overlap.
    """
    start, end = window
    if not end > start:
        raise UsageError("window end must exceed its start")
    if not np.array_equal(on_trace.bin_edges, off_trace.bin_edges):
        raise UsageError("traces must share the same binning")
    edges = on_trace.bin_edges
    if start < edges[0] or end > edges[-1]:
        raise UsageError(f"window {window} outside trace span [{edges[0]}, {edges[-1]}]")
    on = _window_sum(on_trace, start, end)
    off = _window_sum(off_trace, start, end)
    if off == 0:
        raise DegenerateError("background integrates to zero over the window")
    return (on - off) / off


def dark_count_corrected_purity(g2_raw, p_signal, dark_rate, window) -> float:
    """Single-photon purity 1 - g2(0) after removing dark-count accidentals.

    ``p_signal`` is the per-pulse signal detection probability per detector,
    ``dark_rate`` the dark-count rate (counts/s) and ``window`` the detection
    window (ns). Accidentals per pulse pair are ``2 p_dark p_signal + p_dark^2``
    with ``p_dark = dark_rate * window``; they are subtracted from the raw
    zero-delay numerator ``g2_raw (p_signal + p_dark)^2`` and the remainder is
    renormalised by ``p_signal^2``. A negative result is clamped to zero with
    a warning.
    """
    if g2_raw < 0 or p_signal < 0 or dark_rate < 0 or window < 0:
        raise DomainError("inputs must be non-negative")
    if p_signal == 0:
        raise DegenerateError("signal probability is zero")
    p_dark = dark_rate * window * 1e-9
    p_acc = 2.0 * p_dark * p_signal + p_dark ** 2
    g2 = (g2_raw * (p_signal + p_dark) ** 2 - p_acc) / p_signal ** 2
    if g2 < 0:
        warnings.warn(f"dark-count correction drove g2(0) to {g2:.3g}; clamped to 0",
                      RuntimeWarning, stacklevel=2)
        g2 = 0.0
    return 1.0 - g2


def collection_efficiency_budget(p_detected, dw_branching, quantum_efficiency,
                                 setup_efficiency, direction_factor) -> float:
    """Back out a coupling efficiency from a detected-photon probability.

    The chain is a plain product; ``dw_branching`` is whatever fraction of the
    emission lands in the detected band.
    """
    for name, f in (("dw_branching", dw_branching),
                    ("quantum_efficiency", quantum_efficiency),
                    ("setup_efficiency", setup_efficiency),
                    ("direction_factor", direction_factor)):
        if not 0 < f <= 1:
            raise DomainError(f"{name}={f} must lie in (0, 1]")
    if not 0 < p_detected <= 1:
        raise DomainError("p_detected must lie in (0, 1]")
    return p_detected / (dw_branching * quantum_efficiency * setup_efficiency
                         * direction_factor)
