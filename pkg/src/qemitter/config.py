"""Flat ``section.key = value`` run configuration.

One assignment per line, ``#`` starts a comment. Lists are comma separated;
``linspace(a, b, n)`` expands to an evenly spaced grid. Unknown sections or
keys are rejected with the offending line number. :func:`serialize` writes
every field in a fixed order with shortest round-trip floats, so
``serialize(parse(text))`` is a fixed point.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from .corrections import InterferometerModel
from .emitter import EmitterParams, mhz_to_angular
from .errors import QEmitterError, UsageError
from .hom import HomConfig
from .sequences import rabi_from_saturation
from .spectral import DetuningEnsemble, gauss_hermite_ensemble, monte_carlo_ensemble


def _grid(a, b, n):
    return [float(x) for x in np.linspace(a, b, n)]


class ConfigError(UsageError):
    """Malformed or invalid configuration; the message names line and field."""


@dataclass
class EmitterSection:
    t1_ns: float = 7.44
    gamma_pd_intrinsic_mhz: float = 6.39
    gamma_pd_laser_mhz: float = 16.0
    t2_star_ns: float = 4.54  # inf disables spectral diffusion


@dataclass
class RabiSection:
    s: List[float] = field(default_factory=lambda: [367.0])
    pulse_length_ns: float = 20.0
    bins: int = 200
    map_s: float = 102.0
    delta_mhz: List[float] = field(default_factory=lambda: [-300.0, -150.0, 0.0, 150.0, 300.0])


@dataclass
class SequenceSection:
    s: float = 367.0
    # sets Omega directly (Omega/2pi, MHz); none derives it from s and T1
    rabi_mhz: Optional[float] = None
    tau_ns: List[float] = field(default_factory=lambda: _grid(0.0, 12.0, 25))
    readout_ns: float = 10.0
    ideal: bool = False
    # Ramsey runs may use their own dephasing rates; none falls back to [emitter]
    ramsey_gamma_pd_intrinsic_mhz: Optional[float] = None
    ramsey_gamma_pd_laser_mhz: Optional[float] = None


@dataclass
class PleSection:
    s: float = 1.0
    inhomogeneous_fwhm_mhz: float = 0.0
    detuning_mhz: List[float] = field(default_factory=lambda: _grid(-300.0, 300.0, 601))


@dataclass
class HomSection:
    gamma_pd_mhz: float = 6.39
    t_max_ns: float = math.inf
    quadrature_order: int = 32
    theta: List[float] = field(default_factory=lambda: _grid(1.0, 5.0, 41))
    window_ns: List[float] = field(default_factory=lambda: _grid(1.0, 40.0, 40))
    mc_trajectories: int = 0


@dataclass
class InterferometerSection:
    delta1: float = 0.0
    delta2: float = 0.04
    epsilon: float = 0.04
    g2: float = 0.0836


@dataclass
class EnsembleSection:
    method: str = "gauss-hermite"
    nodes: int = 64
    draws: int = 4096
    seed: int = 0


@dataclass
class OutputSection:
    dir: str = "results"


@dataclass
class RunConfig:
    emitter: EmitterSection = field(default_factory=EmitterSection)
    rabi: RabiSection = field(default_factory=RabiSection)
    sequence: SequenceSection = field(default_factory=SequenceSection)
    ple: PleSection = field(default_factory=PleSection)
    hom: HomSection = field(default_factory=HomSection)
    interferometer: InterferometerSection = field(default_factory=InterferometerSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- conversion to module-level types ----------------------------------

    def emitter_params(self) -> EmitterParams:
        e = self.emitter
        t2 = None if math.isinf(e.t2_star_ns) else e.t2_star_ns
        return _checked("emitter", lambda: EmitterParams.from_mhz(
            e.t1_ns, e.gamma_pd_intrinsic_mhz, e.gamma_pd_laser_mhz, t2))

    def ramsey_emitter_params(self) -> EmitterParams:
        e, q = self.emitter, self.sequence
        intr = e.gamma_pd_intrinsic_mhz if q.ramsey_gamma_pd_intrinsic_mhz is None \
            else q.ramsey_gamma_pd_intrinsic_mhz
        laser = e.gamma_pd_laser_mhz if q.ramsey_gamma_pd_laser_mhz is None \
            else q.ramsey_gamma_pd_laser_mhz
        t2 = None if math.isinf(e.t2_star_ns) else e.t2_star_ns
        return _checked("sequence", lambda: EmitterParams.from_mhz(e.t1_ns, intr, laser, t2))

    def sequence_omega(self, t1_lifetime) -> float:
        """Rabi rate (rad/ns) of the Ramsey and Hahn pulses."""
        q = self.sequence
        if q.rabi_mhz is not None:
            return mhz_to_angular(q.rabi_mhz)
        omega = rabi_from_saturation(q.s, t1_lifetime)
        if not omega > 0:
            raise ConfigError("sequence.s gives a zero Rabi rate (is T1 infinite?); "
                              "set sequence.rabi_mhz")
        return omega

    def ensemble_for(self, t2_star) -> DetuningEnsemble:
        en = self.ensemble
        if en.method == "gauss-hermite":
            return _checked("ensemble", lambda: gauss_hermite_ensemble(t2_star, en.nodes))
        return _checked("ensemble", lambda: monte_carlo_ensemble(t2_star, en.draws, en.seed))

    def hom_config(self) -> HomConfig:
        h = self.hom
        return _checked("hom", lambda: HomConfig(
            self.emitter.t1_ns, h.gamma_pd_mhz * 2e-3 * math.pi, h.t_max_ns, h.quadrature_order))

    def interferometer_model(self) -> InterferometerModel:
        i = self.interferometer
        return _checked("interferometer", lambda: InterferometerModel.from_imbalance(
            i.delta1, i.delta2, i.epsilon, i.g2))


def _checked(section, build):
    try:
        return build()
    except QEmitterError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


_SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}
_CHOICES = {("ensemble", "method"): ("gauss-hermite", "monte-carlo")}
_LINSPACE = re.compile(r"^linspace\(\s*([^,]+),\s*([^,]+),\s*([^)]+)\)$")


def _field_types(section) -> Dict[str, str]:
    return {f.name: str(f.type) for f in fields(_SECTIONS[section]())}


def _parse_float(text):
    t = text.strip().lower()
    if t in ("inf", "+inf"):
        return math.inf
    return float(t)


def _parse_value(kind, text):
    if kind == "Optional[float]":
        return None if text.strip().lower() == "none" else float(text)
    if kind == "float":
        return _parse_float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        t = text.lower()
        if t not in ("true", "false"):
            raise ValueError("expected true or false")
        return t == "true"
    if kind == "str":
        return text
    # List[float]
    m = _LINSPACE.match(text)
    if m:
        a, b, n = _parse_float(m[1]), _parse_float(m[2]), int(m[3])
        if n < 1:
            raise ValueError("linspace needs at least one point")
        return [float(x) for x in np.linspace(a, b, n)]
    items = [x for x in (s.strip() for s in text.split(",")) if x]
    if not items:
        raise ValueError("empty list")
    return [_parse_float(x) for x in items]


def parse(text: str) -> RunConfig:
    sections = {name: factory() for name, factory in _SECTIONS.items()}
    seen: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(f"line {lineno}: key {key!r} must be 'section.key'")
        section, name = key.split(".")
        if section not in sections:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        types = _field_types(section)
        if name not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: {key!r} already set on line {seen[key]}")
        seen[key] = lineno
        try:
            parsed = _parse_value(types[name], value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: cannot parse {value!r} "
                              f"as {types[name]} ({exc})") from exc
        choices = _CHOICES.get((section, name))
        if choices and parsed not in choices:
            raise ConfigError(f"line {lineno}: {key} must be one of {', '.join(choices)}")
        setattr(sections[section], name, parsed)
    cfg = RunConfig(**sections)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Build every module-level object once so bad values fail early."""
    cfg.emitter_params()
    cfg.hom_config()
    cfg.interferometer_model()
    cfg.ensemble_for(4.0)
    checks = [
        ("rabi.s", all(s >= 0 for s in cfg.rabi.s), "saturation must be >= 0"),
        ("rabi.pulse_length_ns", cfg.rabi.pulse_length_ns > 0, "must be positive"),
        ("rabi.bins", cfg.rabi.bins >= 1, "must be >= 1"),
        ("rabi.map_s", cfg.rabi.map_s > 0, "must be positive"),
        ("sequence.s", cfg.sequence.s > 0, "must be positive"),
        ("sequence.rabi_mhz", cfg.sequence.rabi_mhz is None or cfg.sequence.rabi_mhz > 0,
         "must be positive"),
        ("sequence.tau_ns", all(t >= 0 for t in cfg.sequence.tau_ns), "must be >= 0"),
        ("sequence.readout_ns", cfg.sequence.readout_ns > 0, "must be positive"),
        ("ple.s", cfg.ple.s >= 0, "must be >= 0"),
        ("ple.inhomogeneous_fwhm_mhz", cfg.ple.inhomogeneous_fwhm_mhz >= 0, "must be >= 0"),
        ("hom.theta", all(t >= 1 for t in cfg.hom.theta), "theta must be >= 1"),
        ("hom.window_ns", all(t > 0 for t in cfg.hom.window_ns), "must be positive"),
        ("hom.mc_trajectories", cfg.hom.mc_trajectories >= 0, "must be >= 0"),
    ]
    for name, ok, why in checks:
        if not ok:
            raise ConfigError(f"{name}: {why}")


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "inf" if math.isinf(v) and v > 0 else repr(float(v))  # shortest exact form
    if isinstance(v, (list, tuple)):
        return ", ".join(_format_value(float(x)) for x in v)
    return str(v)


def serialize(cfg: RunConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in fields(obj):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return parse(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
