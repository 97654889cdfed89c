"""Forward models and fit wrappers for the measured traces.

Every wrapper derives its own starting point (log-linear regression for
decays, FFT peak for Rabi oscillations) so it can run unattended.
"""

from __future__ import annotations

import math
import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np

from .emitter import EmitterParams, TimeTrace
from .errors import DegenerateError, UsageError
from .fitting import (FitProblem, FitResult, FreeParameter, fit_least_squares,
                      poisson_weights, require_signal)
from .sequences import (ContrastCurve, contrast_curve, dominant_frequency,
                        rabi_population, raw_contrast)
from .spectral import FWHM_PER_SIGMA, gauss_hermite_ensemble

# ---------------------------------------------------------------------------
# closed-form models


def exponential(t, p):
    return p["A"] * np.exp(-t / p["T1"]) + p["B"]


def biexponential(t, p):
    return (p["A1"] * np.exp(-t / p["tau1"]) + p["A2"] * np.exp(-t / p["tau2"])
            + p["C"])


def lorentzian(x, p):
    hw = 0.5 * p["fwhm"]
    return p["amplitude"] * hw * hw / ((x - p["center"]) ** 2 + hw * hw) + p["offset"]


def gaussian(x, p):
    sigma = p["fwhm"] / FWHM_PER_SIGMA
    return p["amplitude"] * np.exp(-0.5 * ((x - p["center"]) / sigma) ** 2) + p["offset"]


def q_saturation(omega, p):
    """Q(Omega) = Omega / (Gamma0/2 + Gamma_PD0 + alpha Omega)."""
    return omega / (0.5 / p["t1"] + p["gamma_pd0"] + p["alpha"] * omega)


MODELS = {
    "exponential": exponential,
    "biexponential": biexponential,
    "lorentzian": lorentzian,
    "gaussian": gaussian,
    "q_saturation": q_saturation,
}


def _loglinear(t, y):
    """(amplitude, decay time) from a straight-line fit to log(y) over y > 0."""
    keep = y > 0
    if keep.sum() < 2:
        raise DegenerateError("too few positive points for a log-linear estimate")
    slope, icpt = np.polyfit(t[keep], np.log(y[keep]), 1)
    tau = -1.0 / slope if slope < 0 else (t.max() - t.min())
    return math.exp(icpt), tau


# ---------------------------------------------------------------------------
# lifetime


def fit_lifetime(trace: TimeTrace, fix_background: Optional[float] = None,
                 weights=None, **kw) -> FitResult:
    """A exp(-t/T1) + B over the trace bin centres.

    Weights default to Poisson, ``1/max(counts, 1)``. ``fix_background``
    pins B.
    """
    t, y = trace.centers, trace.counts
    require_signal(y, "lifetime trace")
    tail = y[-max(3, y.size // 10):]
    b0 = float(np.median(tail)) if fix_background is None else fix_background
    a0, tau0 = _loglinear(t - t[0], y - b0)
    a0 *= math.exp(t[0] / tau0)
    span = t.max() - t.min()
    tau0 = min(max(tau0, 1e-3 * span), 1e3 * span)
    free = {"A": FreeParameter(a0, 0.0),
            "T1": FreeParameter(tau0, 1e-9 * span)}
    fixed = {}
    if fix_background is None:
        yscale = float(np.max(np.abs(y)))
        free["B"] = FreeParameter(b0, -math.inf, math.inf, scale=yscale)
    else:
        fixed["B"] = fix_background
    w = poisson_weights(y) if weights is None else weights
    return fit_least_squares(FitProblem(exponential, t, y, free, fixed, w, "exponential"), **kw)


# ---------------------------------------------------------------------------
# Rabi oscillations


def rabi_model(emitter: EmitterParams, n_nodes=64):
    """Ensemble-averaged population with the pulse dephasing as a parameter.

    ``emitter`` supplies Gamma0 and T2*; its dephasing rates are ignored.
    """
    ens = gauss_hermite_ensemble(emitter.t2_star, n_nodes)

    def model(t, p):
        em = EmitterParams(emitter.t1_lifetime, p["gamma_pd"], 0.0, emitter.t2_star)
        pop = rabi_population(t, p["omega"], em, ens, p.get("detuning", 0.0))
        return p.get("scale", 1.0) * pop + p.get("offset", 0.0)

    return model


def _fit_one_rabi(trace, emitter, n_nodes, fit_scale, omega_guess=None, **kw):
    t, y = trace.centers, trace.counts
    require_signal(y, "Rabi trace")
    model = rabi_model(emitter, n_nodes)
    if omega_guess is None:
        omega_guess = dominant_frequency(t, y)
    gpd0 = 0.05 * abs(omega_guess) + 0.01
    fixed = {}
    scale0 = 1.0
    if fit_scale:
        scale0 = float(np.max(y)) / max(float(np.max(model(t, {"omega": omega_guess,
                                                                "gamma_pd": gpd0}))), 1e-12)
    # coarse scan guards against harmonics and a poor FFT estimate
    span = t[-1] - t[0]
    nyquist = math.pi / (t[1] - t[0])
    grid = np.concatenate([omega_guess * np.array([0.8, 0.9, 1.0, 1.1, 1.25]),
                           np.geomspace(math.pi / span, 0.5 * nyquist, 40)])
    best = None
    for w in grid[grid > 0]:
        p = {"omega": float(w), "gamma_pd": gpd0, "scale": scale0}
        c = float(np.sum((model(t, p) - y) ** 2))
        if best is None or c < best[0]:
            best = (c, float(w))
    periods = best[1] * span / (2 * math.pi)
    if periods < 1:
        warnings.warn(f"trace spans only {periods:.2f} Rabi periods; Omega is poorly "
                      "conditioned", RuntimeWarning, stacklevel=3)
    free = {"omega": FreeParameter(best[1], 1e-6),
            "gamma_pd": FreeParameter(gpd0, 0.0, math.inf, scale=0.05)}
    if fit_scale:
        free["scale"] = FreeParameter(scale0, 0.0)
    problem = FitProblem(model, t, y, free, fixed, None, "rabi")
    return fit_least_squares(problem, **kw)


def fit_rabi(traces, emitter: EmitterParams, n_nodes: int = 64, fit_scale: bool = False,
             **kw) -> List[FitResult]:
    """Fit Omega and Gamma_PD to each trace, Gamma0 and T2* held fixed.

    Traces are excited-state populations (``fit_scale=False``) or
    fluorescence proportional to it (``fit_scale=True`` adds a scale factor).
    """
    if isinstance(traces, TimeTrace):
        traces = [traces]
    return [_fit_one_rabi(tr, emitter, n_nodes, fit_scale, **kw) for tr in traces]


def fit_rabi_vs_sqrt_s(s_values, omegas, sigmas=None) -> FitResult:
    """Straight line through the origin, Omega = k sqrt(s), plus a free-intercept fit.

    Returns the free-intercept fit (``slope``, ``intercept``) so the zero
    intercept can be tested.
    """
    x = np.sqrt(np.asarray(s_values, dtype=float))
    y = np.asarray(omegas, dtype=float)
    w = None if sigmas is None else 1.0 / np.asarray(sigmas, dtype=float) ** 2
    slope0 = float(np.dot(x, y) / np.dot(x, x))

    def line(xx, p):
        return p["slope"] * xx + p["intercept"]

    free = {"slope": FreeParameter(slope0, scale=abs(slope0)),
            "intercept": FreeParameter(0.0, scale=abs(slope0))}
    return fit_least_squares(FitProblem(line, x, y, free, {}, w, "line"))


# ---------------------------------------------------------------------------
# Ramsey / Hahn contrast


def contrast_model(kind, emitter: EmitterParams, omega, n_nodes=64, ideal=False,
                   raw=False):
    """Normalised contrast, or the raw population difference with ``raw=True``."""
    def model(tau, p):
        t2 = p.get("t2_star", emitter.t2_star)
        em = EmitterParams(emitter.t1_lifetime, p["gamma_pd_intrinsic"],
                           p["gamma_pd_laser"], t2)
        if raw:
            return raw_contrast(kind, tau, em, omega, None, ideal, n_nodes)
        try:
            return contrast_curve(kind, tau, em, omega, None, ideal, n_nodes).contrast
        except DegenerateError:
            # no zero-delay contrast to normalise by: reject this trial point
            return np.full(np.shape(tau), np.nan)
    return model


def _contrast_data(curve, use_raw):
    if use_raw == "auto":
        use_raw = curve.raw is not None
    if use_raw and curve.raw is None:
        raise UsageError("curve carries no raw contrast")
    return (np.asarray(curve.raw, dtype=float) if use_raw else curve.contrast), use_raw


def _envelope_rate(curve: ContrastCurve):
    keep = curve.contrast > 0.05
    if keep.sum() < 2:
        return 1.0 / max(curve.taus.max(), 1e-9)
    _, tau = _loglinear(curve.taus[keep], curve.contrast[keep])
    return 1.0 / tau


def fit_ramsey(curve: ContrastCurve, emitter: EmitterParams, omega: float,
               n_nodes: int = 64, t2_upper: float = 1e3, initial=None,
               use_raw="auto", **kw) -> FitResult:
    """Free (Gamma_PD intrinsic, Gamma_PD laser, T2*) with Gamma0 fixed.

    Normalising to the zero-delay contrast divides out most of the in-pulse
    dephasing, so Gamma_PD laser is only well determined from the raw
    population contrast (used whenever the curve carries it).
    """
    if curve.taus.min() > 1.0 / emitter.gamma0:
        raise UsageError("Ramsey curve must include the short-delay region")
    rate = _envelope_rate(curve)
    init = {"gamma_pd_intrinsic": 0.3 * rate, "gamma_pd_laser": 0.5 * rate,
            "t2_star": min(1.0 / rate, 0.5 * t2_upper)}
    init.update(initial or {})
    y, raw = _contrast_data(curve, use_raw)
    free = {"gamma_pd_intrinsic": FreeParameter(init["gamma_pd_intrinsic"], 0.0, scale=0.05),
            "gamma_pd_laser": FreeParameter(init["gamma_pd_laser"], 0.0, omega, scale=0.05),
            "t2_star": FreeParameter(init["t2_star"], 1e-3, t2_upper)}
    problem = FitProblem(contrast_model("ramsey", emitter, omega, n_nodes, raw=raw),
                         curve.taus, y, free, {}, None, "ramsey")
    return fit_least_squares(problem, **kw)


def fit_hahn(curve: ContrastCurve, emitter: EmitterParams, omega: float,
             n_nodes: int = 64, ideal: bool = False, initial=None, use_raw="auto",
             **kw) -> FitResult:
    """Free (Gamma_PD intrinsic, Gamma_PD laser); Gamma0 and T2* fixed.

    The echo refocuses quasi-static detuning, so T2* is not identifiable
    here. Raw contrast is preferred as in :func:`fit_ramsey`.
    """
    rate = _envelope_rate(curve)
    init = {"gamma_pd_intrinsic": max(rate - 0.5 * emitter.gamma0, 0.2 * rate),
            "gamma_pd_laser": 0.5 * rate}
    init.update(initial or {})
    y, raw = _contrast_data(curve, use_raw)
    free = {"gamma_pd_intrinsic": FreeParameter(init["gamma_pd_intrinsic"], 0.0, scale=0.05),
            "gamma_pd_laser": FreeParameter(init["gamma_pd_laser"], 0.0, omega, scale=0.05)}
    problem = FitProblem(contrast_model("hahn", emitter, omega, n_nodes, ideal, raw),
                         curve.taus, y, free, {}, None, "hahn")
    return fit_least_squares(problem, **kw)


# ---------------------------------------------------------------------------
# quality factor saturation


def fit_q_saturation(omegas, qs, t1: float, sigmas=None, **kw) -> FitResult:
    """Q(Omega) with a dephasing rate Gamma_PD0 + alpha Omega."""
    om = np.asarray(omegas, dtype=float)
    q = np.asarray(qs, dtype=float)
    if om.size < 3:
        raise UsageError("need at least three (Omega, Q) points")
    # Omega/Q is linear in Omega
    slope, icpt = np.polyfit(om, om / q, 1)
    free = {"gamma_pd0": FreeParameter(max(icpt - 0.5 / t1, 0.0), 0.0, scale=0.01),
            "alpha": FreeParameter(max(slope, 0.0), 0.0, scale=0.01)}
    w = None if sigmas is None else 1.0 / np.asarray(sigmas, dtype=float) ** 2
    return fit_least_squares(FitProblem(q_saturation, om, q, free, {"t1": t1}, w,
                                        "q_saturation"), **kw)


# ---------------------------------------------------------------------------
# generic shapes


def fit_biexponential(trace: TimeTrace, weights=None, **kw) -> FitResult:
    """A1 exp(-t/tau1) + A2 exp(-t/tau2) + C with tau1 the fast component.

    Equal decay times make the amplitudes degenerate; that raises
    :class:`RankDeficiencyError`, and a near-degenerate pair is reported in
    ``warnings``.
    """
    t, y = trace.centers, trace.counts
    require_signal(y, "decay trace")
    n = y.size
    c0 = float(np.min(y[-max(3, n // 10):]))
    c0 = 0.5 * c0 if c0 > 0 else c0
    half = slice(n // 2, None)
    a2, tau2 = _loglinear(t[half], y[half] - c0)
    fast = y - c0 - a2 * np.exp(-t / tau2)
    head = slice(0, max(3, n // 4))
    try:
        a1, tau1 = _loglinear(t[head], fast[head])
    except DegenerateError:
        a1, tau1 = 0.1 * a2, 0.2 * tau2
    tau1 = min(tau1, 0.5 * tau2)
    span = t.max() - t.min()
    yscale = float(np.max(np.abs(y)))
    free = {"A1": FreeParameter(a1, scale=yscale),
            "tau1": FreeParameter(tau1, 1e-9 * span),
            "A2": FreeParameter(a2, scale=yscale),
            "tau2": FreeParameter(tau2, 1e-9 * span),
            "C": FreeParameter(c0, scale=yscale)}
    w = poisson_weights(y) if weights is None else weights
    res = fit_least_squares(FitProblem(biexponential, t, y, free, {}, w, "biexponential"), **kw)
    if abs(res["tau1"] - res["tau2"]) < 1e-2 * max(res["tau1"], res["tau2"]):
        res.warnings.append("decay times coincide; amplitudes A1, A2 are degenerate")
    return res


def _peak_guess(x, y):
    off = float(np.min(y))
    i = int(np.argmax(y))
    amp = float(y[i]) - off
    above = x[y - off >= 0.5 * amp]
    width = float(above.max() - above.min()) if above.size > 1 else float(np.ptp(x)) / 10
    return amp, float(x[i]), max(width, 1e-12), off


def _fit_peak(model, name, x, y, weights, kw):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    require_signal(y, "lineshape")
    amp, cen, wid, off = _peak_guess(x, y)
    free = {"amplitude": FreeParameter(amp, scale=amp or 1.0),
            "center": FreeParameter(cen, scale=wid),
            "fwhm": FreeParameter(wid, 0.0),
            "offset": FreeParameter(off, scale=amp or 1.0)}
    return fit_least_squares(FitProblem(model, x, y, free, {}, weights, name), **kw)


def fit_lorentzian(x, y, weights=None, **kw) -> FitResult:
    """Lorentzian peak; ``fwhm`` is twice the half-width gamma."""
    return _fit_peak(lorentzian, "lorentzian", x, y, weights, kw)


def fit_gaussian(x, y, weights=None, **kw) -> FitResult:
    """Gaussian peak; ``fwhm = 2 sqrt(2 ln 2) sigma``."""
    return _fit_peak(gaussian, "gaussian", x, y, weights, kw)
