"""Command-line entry point: ``python -m qemitter <command> ...``.

Exit status is 0 on success, 1 on numerical failure (including fits that
do not converge) and 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import corrections as corr
from . import fits
from .config import ConfigError, RunConfig, load, parse
from .emitter import TimeTrace, angular_to_mhz, mhz_to_angular
from .errors import DegenerateError, DomainError, NumericalError, UsageError
from .fitting import FitResult
from .hom import (coincidence_closed_form, mc_phase_oracle, visibility,
                  visibility_vs_theta, visibility_vs_window, window_fraction)
from .results import ResultBundle, read_csv
from .sequences import (coherence_limit, contrast_curve, pi_pulse, quality_factor,
                        rabi_from_saturation, simulate_detuned_rabi_map, simulate_rabi)
from .spectral import ple_lineshape, profile_fwhm

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2
SIMULATE_KINDS = ("rabi", "rabi-map", "ramsey", "hahn", "ple")
FIGURES = ("fig2", "fig3a", "figs8")
FIT_MODELS = {
    # model -> accepted leading header columns
    "lifetime": [("t_ns", "value")],
    "biexponential": [("t_ns", "value")],
    "rabi": [("t_ns", "value")],
    "ramsey": [("t_ns", "value")],
    "hahn": [("t_ns", "value")],
    "lorentzian": [("detuning_mhz", "value")],
    "gaussian": [("detuning_mhz", "value")],
    "q-saturation": [("omega_mhz", "value")],
}


def _pmap(fn: Callable, items: Sequence, threads: int) -> List:
    """Order-preserving map; results do not depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _ensemble(cfg: RunConfig, em):
    return cfg.ensemble_for(em.t2_star)


def _one_over_e(taus, contrast):
    """First 1/e crossing by linear interpolation, nan if never reached."""
    below = np.nonzero(contrast < math.exp(-1.0))[0]
    if below.size == 0 or below[0] == 0:
        return math.nan
    i = below[0]
    return float(np.interp(math.exp(-1.0), [contrast[i], contrast[i - 1]], [taus[i], taus[i - 1]]))


# ---------------------------------------------------------------------------
# simulate


def _rabi_traces(cfg, em, s_values, threads):
    ens = _ensemble(cfg, em)
    r = cfg.rabi
    return _pmap(lambda s: simulate_rabi(em, s, r.pulse_length_ns, r.bins, ens), s_values,
                 threads)


def _add_rabi(bundle, cfg, em, s_values, threads, name="rabi"):
    traces = _rabi_traces(cfg, em, s_values, threads)
    header = ["t_ns"] + [f"rho11_s{s:g}" for s in s_values]
    bundle.table(name, header, [traces[0].centers] + [t.counts for t in traces])
    for s, tr in zip(s_values, traces):
        omega = rabi_from_saturation(s, em.t1_lifetime)
        bundle.add(f"{name}.s{s:g}.omega_mhz", angular_to_mhz(omega))
        bundle.add(f"{name}.s{s:g}.pi_over_omega_ns", math.pi / omega if omega > 0 else math.inf)
        try:
            t_pi, fid = pi_pulse(tr)
        except UsageError:
            t_pi, fid = math.nan, math.nan
        bundle.add(f"{name}.s{s:g}.pi_time_ns", t_pi)
        bundle.add(f"{name}.s{s:g}.pi_fidelity", fid)
        bundle.add(f"{name}.s{s:g}.final_rho11", float(tr.counts[-1]))
    return traces


def _add_rabi_map(bundle, cfg, em, threads):
    r = cfg.rabi
    deltas = [mhz_to_angular(d) for d in r.delta_mhz]
    ens = _ensemble(cfg, em)
    traces = _pmap(lambda d: simulate_detuned_rabi_map(em, r.map_s, [d], r.pulse_length_ns,
                                                       r.bins, ens)[0], deltas, threads)
    t = traces[0].centers
    header = ["t_ns"] + [f"rho11_delta{d:g}mhz" for d in r.delta_mhz]
    bundle.table("rabi_map", header, [t] + [tr.counts for tr in traces])
    bundle.add("rabi_map.s", r.map_s, "config")
    bundle.add("rabi_map.omega_mhz", angular_to_mhz(rabi_from_saturation(r.map_s, em.t1_lifetime)))


def _add_sequence(bundle, cfg, kind, em):
    q = cfg.sequence
    omega = cfg.sequence_omega(em.t1_lifetime)
    taus = np.asarray(q.tau_ns, dtype=float)
    curve = contrast_curve(kind, taus, em, omega, _ensemble(cfg, em), q.ideal)
    bundle.table(kind, ["tau_ns", "contrast", "raw_contrast", "coherence_limit"],
                 [taus, curve.contrast, curve.raw, coherence_limit(taus, em.t1_lifetime)])
    bundle.add(f"{kind}.omega_mhz", angular_to_mhz(omega))
    bundle.add(f"{kind}.gamma_pd_intrinsic_mhz", angular_to_mhz(em.gamma_pd_intrinsic), "config")
    bundle.add(f"{kind}.gamma_pd_laser_mhz", angular_to_mhz(em.gamma_pd_laser), "config")
    bundle.add(f"{kind}.one_over_e_time_ns", _one_over_e(taus, curve.contrast))
    return curve


def _add_ple(bundle, cfg, em):
    p = cfg.ple
    grid_mhz = np.asarray(p.detuning_mhz, dtype=float)
    prof = ple_lineshape(em, p.s, mhz_to_angular(p.inhomogeneous_fwhm_mhz),
                         mhz_to_angular(grid_mhz))
    bundle.table("ple", ["detuning_mhz", "intensity"], [grid_mhz, prof])
    try:
        bundle.add("ple.fwhm_mhz", profile_fwhm(grid_mhz, prof))
    except UsageError:
        bundle.add("ple.fwhm_mhz", math.nan)


def cmd_simulate(kind: str, cfg: RunConfig, threads: int = 1) -> ResultBundle:
    b = ResultBundle()
    if kind == "rabi":
        _add_rabi(b, cfg, cfg.emitter_params(), cfg.rabi.s, threads)
    elif kind == "rabi-map":
        _add_rabi_map(b, cfg, cfg.emitter_params(), threads)
    elif kind == "ramsey":
        _add_sequence(b, cfg, "ramsey", cfg.ramsey_emitter_params())
    elif kind == "hahn":
        _add_sequence(b, cfg, "hahn", cfg.emitter_params())
    elif kind == "ple":
        _add_ple(b, cfg, cfg.emitter_params())
    else:
        raise UsageError(f"unknown simulation {kind!r}")
    return b


# ---------------------------------------------------------------------------
# hom


def cmd_hom(cfg: RunConfig, threads: int = 1, seed: int = 0) -> ResultBundle:
    h = cfg.hom
    config = cfg.hom_config()
    b = ResultBundle()
    theta = np.asarray(h.theta, dtype=float)
    v_theta = _pmap(lambda th: float(visibility_vs_theta([th], config.t1_lifetime,
                                                         config.t_max, h.quadrature_order)[0]),
                    list(theta), threads)
    b.table("hom_vs_theta", ["theta", "visibility"], [theta, v_theta])
    windows = np.asarray(h.window_ns, dtype=float)
    v_win = _pmap(lambda t: float(visibility_vs_window([t], config)[0]), list(windows), threads)
    frac = [window_fraction(t, config.t1_lifetime) for t in windows]
    b.table("hom_vs_window", ["t_max_ns", "visibility", "window_fraction"], [windows, v_win, frac])
    v_inf = 1.0 - 2.0 * coincidence_closed_form(config.with_window(math.inf))
    b.add("hom.theta", config.theta)
    b.add("hom.visibility_infinite", v_inf)
    if math.isfinite(config.t_max):
        b.add("hom.t_max_ns", config.t_max, "config")
        b.add("hom.visibility_window", visibility(config).visibility)
        b.add("hom.window_fraction", window_fraction(config.t_max, config.t1_lifetime))
    if h.mc_trajectories > 0:
        idx = sorted({0, windows.size // 2, windows.size - 1})
        rows = []
        for i in idx:
            cw = config.with_window(float(windows[i]))
            mc = mc_phase_oracle(cw, h.mc_trajectories, seed + i)
            rows.append((windows[i], v_win[i], mc.visibility, mc.stderr,
                         (v_win[i] - mc.visibility) / mc.stderr if mc.stderr > 0 else 0.0))
        cols = list(zip(*rows))
        b.table("hom_mc_check", ["t_max_ns", "visibility_quadrature", "visibility_mc",
                                 "mc_stderr", "z_score"], cols)
        b.add("hom.mc_trajectories", h.mc_trajectories, "config")
        b.add("hom.mc_max_abs_z", float(np.max(np.abs(cols[4]))))
    return b


# ---------------------------------------------------------------------------
# fit


def _add_fit(b: ResultBundle, res: FitResult, prefix="fit"):
    for name in res.names:
        b.add(f"{prefix}.{name}", res.values[name], "fit")
        b.add(f"{prefix}.{name}.sigma", res.uncertainties[name], "fit")
    for name, v in res.fixed.items():
        b.add(f"{prefix}.{name}", v, "config")
    b.add(f"{prefix}.cost", res.cost, "fit")
    b.add(f"{prefix}.reduced_chi2", res.reduced_chi2, "fit")
    b.add(f"{prefix}.dof", res.dof, "fit")
    b.add(f"{prefix}.iterations", res.iterations, "fit")
    b.add(f"{prefix}.converged", res.converged, "fit")
    b.add(f"{prefix}.message", res.message, "fit")
    if res.active_bounds:
        b.add(f"{prefix}.active_bounds", ", ".join(res.active_bounds), "fit")


def cmd_fit(model: str, path, cfg: RunConfig, raw_contrast: bool = False):
    """Returns (bundle, converged)."""
    if model not in FIT_MODELS:
        raise UsageError(f"unknown fit model {model!r}; choose from {', '.join(FIT_MODELS)}")
    header, data = read_csv(path, FIT_MODELS[model])
    x, y = data[:, 0], data[:, 1]
    weights = None
    if len(header) > 2:
        sigma = data[:, 2]
        if np.any(sigma <= 0):
            raise UsageError(f"{path}: sigma column must be positive")
        weights = 1.0 / sigma ** 2
    em = cfg.emitter_params()
    b = ResultBundle()
    b.add("fit.model", model, "input")
    b.add("fit.points", int(x.size), "input")
    extra = {}
    if model == "lifetime":
        res = fits.fit_lifetime(TimeTrace.from_centers(x, y), weights=weights)
        pred = fits.exponential(x, {**res.fixed, **res.values})
    elif model == "biexponential":
        res = fits.fit_biexponential(TimeTrace.from_centers(x, y), weights=weights)
        pred = fits.biexponential(x, {**res.fixed, **res.values})
    elif model == "rabi":
        trace = TimeTrace.from_centers(x, y)
        res = fits.fit_rabi(trace, em, cfg.ensemble.nodes)[0]
        pred = fits.rabi_model(em, cfg.ensemble.nodes)(x, {**res.fixed, **res.values})
        extra = {"fit.omega_mhz": angular_to_mhz(res["omega"]),
                 "fit.gamma_pd_mhz": angular_to_mhz(res["gamma_pd"])}
    elif model in ("ramsey", "hahn"):
        from .sequences import ContrastCurve
        omega = cfg.sequence_omega(em.t1_lifetime)
        curve = ContrastCurve(x, y / y[0], y) if raw_contrast else ContrastCurve(x, y)
        fitter = fits.fit_ramsey if model == "ramsey" else fits.fit_hahn
        base = cfg.ramsey_emitter_params() if model == "ramsey" else em
        kw = {"ideal": cfg.sequence.ideal} if model == "hahn" else {}
        res = fitter(curve, base, omega, cfg.ensemble.nodes, use_raw=raw_contrast, **kw)
        pred = fits.contrast_model(model, base, omega, cfg.ensemble.nodes,
                                   cfg.sequence.ideal and model == "hahn",
                                   raw_contrast)(x, res.values)
        extra = {f"fit.{k}_mhz": angular_to_mhz(res[k])
                 for k in ("gamma_pd_intrinsic", "gamma_pd_laser")}
    elif model in ("lorentzian", "gaussian"):
        fitter = fits.fit_lorentzian if model == "lorentzian" else fits.fit_gaussian
        res = fitter(x, y, weights=weights)
        pred = fits.MODELS[model](x, res.values)
        extra = {"fit.fwhm_mhz": res["fwhm"]}
    else:
        omegas = mhz_to_angular(x)
        res = fits.fit_q_saturation(omegas, y, em.t1_lifetime,
                                    None if weights is None else 1.0 / np.sqrt(weights))
        pred = fits.q_saturation(omegas, {**res.fixed, **res.values})
    _add_fit(b, res)
    for k, v in extra.items():
        b.add(k, v, "fit")
    b.table("residuals", [header[0], "value", "model", "residual"], [x, y, pred, y - pred])
    return b, res.converged


# ---------------------------------------------------------------------------
# correct


def cmd_correct(args) -> ResultBundle:
    b = ResultBundle()
    g2 = args.g2
    if args.sbr is not None:
        g2_sbr = corr.g2_from_sbr(args.sbr)
        b.add("sbr", args.sbr, "input")
        b.add("g2_from_sbr", g2_sbr)
        if g2 is None:
            g2 = g2_sbr
    v_raw = None
    if (args.g2par is None) != (args.g2perp is None):
        raise UsageError("--g2par and --g2perp must be given together")
    if args.g2par is not None:
        if args.g2par < 0 or not args.g2perp > 0:
            raise DomainError("coincidence values must be non-negative (g2perp > 0)")
        v_raw = corr.raw_visibility(args.g2par, args.g2perp)
        b.add("g2_parallel", args.g2par, "input")
        b.add("g2_perpendicular", args.g2perp, "input")
        b.add("visibility_raw", v_raw)
    if args.v_raw is not None:
        v_raw = args.v_raw
        b.add("visibility_raw", v_raw, "input")
    if v_raw is not None:
        eps = args.epsilon or 0.0
        d2 = args.delta2 or 0.0
        g = g2 or 0.0
        if not 0 <= eps < 1 or g < 0 or abs(d2) > 0.5:
            raise DomainError("need 0 <= epsilon < 1, g2 >= 0, |delta2| <= 0.5")
        b.add("epsilon", eps, "input" if args.epsilon is not None else "default")
        b.add("g2", g, "input" if args.g2 is not None else
              "computed" if args.sbr is not None else "default")
        b.add("delta2", d2, "input" if args.delta2 is not None else "default")
        b.add("visibility_corrected", corr.corrected_visibility(v_raw, eps, g, d2))
    budget = (args.p_detected, args.branching, args.qe, args.setup, args.direction)
    if any(v is not None for v in budget):
        if any(v is None for v in budget):
            raise UsageError("efficiency budget needs --p-detected --branching --qe "
                             "--setup --direction")
        b.add("coupling_efficiency", corr.collection_efficiency_budget(*budget))
    if not b.summary:
        raise UsageError("nothing to compute; pass --sbr, --g2par/--g2perp or budget flags")
    return b


# ---------------------------------------------------------------------------
# reproduce


def preset_text(figure: str) -> str:
    if figure not in FIGURES:
        raise UsageError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    return resources.files("qemitter.presets").joinpath(f"{figure}.cfg").read_text("utf-8")


def _reproduce_fig2(cfg, threads):
    b = ResultBundle()
    em = cfg.emitter_params()
    pulse_s = cfg.sequence.s
    _add_rabi(b, cfg, em, [pulse_s], threads, name="rabi_trace")
    # Omega(s): fit the noiseless simulated trace at each saturation
    s_values = list(cfg.rabi.s)
    traces = _rabi_traces(cfg, em, s_values, threads)
    res = _pmap(lambda tr: fits.fit_rabi(tr, em, cfg.ensemble.nodes)[0], traces, threads)
    om = np.array([r["omega"] for r in res])
    sig = np.array([r.sigma("omega") for r in res])
    truth = np.array([rabi_from_saturation(s, em.t1_lifetime) for s in s_values])
    b.table("rabi_vs_sqrt_s", ["s", "sqrt_s", "omega_true_mhz", "omega_fit_mhz", "omega_fit_sigma_mhz"],
            [s_values, np.sqrt(s_values), angular_to_mhz(truth), angular_to_mhz(om),
             angular_to_mhz(sig)])
    line = fits.fit_rabi_vs_sqrt_s(s_values, om)
    b.add("rabi_vs_sqrt_s.slope_mhz", angular_to_mhz(line["slope"]), "fit")
    b.add("rabi_vs_sqrt_s.intercept_mhz", angular_to_mhz(line["intercept"]), "fit")
    b.add("rabi_vs_sqrt_s.expected_slope_mhz", angular_to_mhz(em.gamma0 / math.sqrt(2.0)))
    omegas = np.linspace(0.0, float(truth.max()), 50)[1:]
    limit = 2.0 * omegas * em.t1_lifetime
    q = [quality_factor(w, em) for w in omegas]
    b.table("quality_factor", ["omega_mhz", "q_model", "q_coherence_limit"],
            [angular_to_mhz(omegas), q, limit])
    _add_rabi_map(b, cfg, em, threads)
    return b


def _reproduce_fig3a(cfg, threads):
    b = ResultBundle()
    _add_sequence(b, cfg, "ramsey", cfg.ramsey_emitter_params())
    _add_sequence(b, cfg, "hahn", cfg.emitter_params())
    return b


def cmd_reproduce(figure: str, cfg: Optional[RunConfig] = None, threads: int = 1,
                  seed: int = 0) -> ResultBundle:
    cfg = parse(preset_text(figure)) if cfg is None else cfg
    if figure == "fig2":
        return _reproduce_fig2(cfg, threads)
    if figure == "fig3a":
        return _reproduce_fig3a(cfg, threads)
    return cmd_hom(cfg, threads, seed)


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (section.key = value)")
    common.add_argument("--seed", type=int, help="overrides ensemble.seed")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")

    p = argparse.ArgumentParser(prog="qemitter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="forward simulations")
    sim.add_argument("kind", choices=SIMULATE_KINDS)
    sim.add_argument("--s", type=float, nargs="+",
                     help="saturation parameter(s); overrides the config for this kind")

    hom = sub.add_parser("hom", parents=[common], help="two-photon interference visibility")
    hom.add_argument("--mc", type=int, help="Monte-Carlo trajectories for the spot check")

    fit = sub.add_parser("fit", parents=[common], help="fit a model to CSV data")
    fit.add_argument("model", choices=list(FIT_MODELS))
    fit.add_argument("csv")
    fit.add_argument("--raw-contrast", action="store_true",
                     help="ramsey/hahn values are raw population contrast, not normalised")

    cor = sub.add_parser("correct", parents=[common], help="imperfection-correction arithmetic")
    cor.add_argument("--sbr", type=float, help="signal-to-background ratio b")
    cor.add_argument("--g2par", type=float, help="normalised zero-delay coincidences, parallel")
    cor.add_argument("--g2perp", type=float, help="normalised zero-delay coincidences, perpendicular")
    cor.add_argument("--v-raw", type=float, help="raw visibility, instead of --g2par/--g2perp")
    cor.add_argument("--epsilon", type=float, help="1 - classical interferometer visibility")
    cor.add_argument("--g2", type=float, help="g2(0); defaults to 2/sbr when --sbr is given")
    cor.add_argument("--delta2", type=float, help="recombination splitter imbalance T - 1/2")
    cor.add_argument("--p-detected", type=float, help="detected photons per pulse")
    cor.add_argument("--branching", type=float, help="fraction of emission in the detected band")
    cor.add_argument("--qe", type=float, help="quantum efficiency")
    cor.add_argument("--setup", type=float, help="setup transmission and detection efficiency")
    cor.add_argument("--direction", type=float, help="fraction emitted towards the collection optics")

    rep = sub.add_parser("reproduce", parents=[common], help="run a shipped figure preset")
    rep.add_argument("figure", choices=FIGURES)
    return p


def _config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load(args.config)
    elif args.command == "reproduce":
        cfg = parse(preset_text(args.figure))
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.ensemble.seed = args.seed
    return cfg


def _apply_overrides(args, cfg):
    if args.command == "simulate" and args.s:
        if args.kind == "rabi":
            cfg.rabi.s = list(args.s)
        elif len(args.s) != 1:
            raise UsageError(f"simulate {args.kind} takes a single --s")
        elif args.kind == "rabi-map":
            cfg.rabi.map_s = args.s[0]
        elif args.kind == "ple":
            cfg.ple.s = args.s[0]
        else:
            cfg.sequence.s = args.s[0]
        if any(s < 0 for s in args.s):
            raise ConfigError("--s must be >= 0")
    if args.command == "hom" and args.mc is not None:
        if args.mc < 0:
            raise ConfigError("--mc must be >= 0")
        cfg.hom.mc_trajectories = args.mc


def run(args) -> int:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    cfg = _config(args)
    _apply_overrides(args, cfg)
    status = EXIT_OK
    if args.command == "simulate":
        bundle = cmd_simulate(args.kind, cfg, args.threads)
    elif args.command == "hom":
        bundle = cmd_hom(cfg, args.threads, cfg.ensemble.seed)
    elif args.command == "fit":
        bundle, converged = cmd_fit(args.model, args.csv, cfg, args.raw_contrast)
        if not converged:
            status = EXIT_NUMERICAL
    elif args.command == "correct":
        bundle = cmd_correct(args)
    else:
        bundle = cmd_reproduce(args.figure, cfg, args.threads, cfg.ensemble.seed)
    out = args.out or cfg.output.dir
    bundle.write(out)
    sys.stdout.write(bundle.render()["summary.txt"])
    if status != EXIT_OK:
        print("error: fit did not converge; see summary for diagnostics", file=sys.stderr)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except (ConfigError, UsageError, DomainError, DegenerateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
