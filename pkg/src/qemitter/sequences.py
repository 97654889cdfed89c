"""Experimental control sequences built from drive segments.

Two pulse models are supported. ``ideal=True`` applies each drive segment as
an instantaneous rotation by ``rabi_rate * duration`` about its phase axis;
otherwise pulses evolve under the full Lindblad generator, with laser-induced
dephasing active and the quasi-static detuning present.

Readout proxy: the excited population at the end of the final drive segment.
The subsequent free decay only rescales that number, so it leaves
normalised contrasts unchanged (``readout="window"`` integrates it anyway).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .emitter import (DensityMatrix, DriveSegment, EmitterParams, PulseSequence,
                      TimeTrace, uniform_bins)
from .errors import DegenerateError, DomainError, UsageError
from .lindblad import (SX, SY, free_propagator, liouvillian_batch,
                       segment_propagators)
from .spectral import DetuningEnsemble, ensemble_for

_GROUND_VEC = np.array([1, 0, 0, 0], dtype=complex)

DEFAULT_READOUT_LENGTH = 10.0
SEQUENCE_KINDS = ("ramsey", "hahn")


def rabi_from_saturation(s: float, t1: float) -> float:
    """Omega = Gamma0 sqrt(s/2), rad/ns."""
    if s < 0:
        raise DomainError(f"saturation parameter must be >= 0, got {s}")
    if not t1 > 0:
        raise DomainError("t1 must be positive")
    return math.sqrt(0.5 * s) / t1


def saturation_from_rabi(omega: float, t1: float) -> float:
    if omega < 0:
        raise DomainError("Rabi rate must be >= 0")
    return 2.0 * (omega * t1) ** 2


def rabi_envelope_decay_rate(emitter: EmitterParams) -> float:
    return 0.5 * emitter.gamma0 + emitter.gamma_pd(True)


def quality_factor(omega: float, emitter: EmitterParams) -> float:
    """Rabi rate times the 1/e envelope decay time, Omega / (Gamma0/2 + Gamma_PD)."""
    if not omega > 0:
        raise DomainError("Rabi rate must be positive")
    rate = rabi_envelope_decay_rate(emitter)
    return math.inf if rate == 0 else omega / rate


# --------------------------------------------------------------------------
# Rabi oscillations


def _uniform(times):
    if times.size < 2:
        return True
    d = np.diff(times)
    return np.allclose(d, d[0], rtol=1e-10, atol=0)


def driven_populations(times, omega, emitter, ensemble: DetuningEnsemble,
                       detuning=0.0, phase=0.0, rho0=None):
    """Per-node excited population under constant drive, shape (n_nodes, n_times).

    ``times`` are measured from the start of the pulse and must be sorted.
    """
    t = np.asarray(times, dtype=float)
    if t.size and (t[0] < 0 or np.any(np.diff(t) < 0)):
        raise UsageError("times must be sorted and non-negative")
    seg = DriveSegment(0.0, omega, detuning, phase, laser_on=True)
    gens = liouvillian_batch(seg, emitter, ensemble.nodes)
    v = np.broadcast_to(_GROUND_VEC if rho0 is None else DensityMatrix(rho0).vec,
                        (len(ensemble), 4)).copy()
    out = np.empty((len(ensemble), t.size))
    if t.size == 0:
        return out
    v = np.einsum("nij,nj->ni", expm(gens * t[0]), v)
    out[:, 0] = v[:, 3].real
    if _uniform(t) and t.size > 1:
        step = expm(gens * (t[1] - t[0]))
        for k in range(1, t.size):
            v = np.einsum("nij,nj->ni", step, v)
            out[:, k] = v[:, 3].real
    else:
        for k in range(1, t.size):
            v = np.einsum("nij,nj->ni", expm(gens * (t[k] - t[k - 1])), v)
            out[:, k] = v[:, 3].real
    return out


def rabi_population(times, omega, emitter, ensemble=None, detuning=0.0, n_nodes=64):
    """Ensemble-averaged excited population during a square pulse."""
    ens = ensemble_for(emitter, n_nodes) if ensemble is None else ensemble
    per_node = driven_populations(times, omega, emitter, ens, detuning)
    return ens.weights @ per_node


def simulate_rabi(emitter: EmitterParams, s: float, pulse_length: float, bins=200,
                  ensemble: Optional[DetuningEnsemble] = None, detuning: float = 0.0,
                  n_nodes: int = 64) -> TimeTrace:
    """Excited population at the bin centres of a resonant (or detuned) pulse.

    Proportional to the instantaneous PSB fluorescence.
    """
    if not pulse_length > 0:
        raise DomainError("pulse_length must be positive")
    edges = uniform_bins(pulse_length, bins)
    omega = rabi_from_saturation(s, emitter.t1_lifetime)
    centres = 0.5 * (edges[1:] + edges[:-1])
    pop = rabi_population(centres, omega, emitter, ensemble, detuning, n_nodes)
    return TimeTrace(edges, pop)


def first_maximum(times, values):
    """(time, value) of the first local maximum, refined by a parabola through 3 points."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    for i in range(1, y.size - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1]:
            denom = y[i - 1] - 2 * y[i] + y[i + 1]
            if denom == 0:
                return float(t[i]), float(y[i])
            shift = 0.5 * (y[i - 1] - y[i + 1]) / denom
            h = 0.5 * (t[i + 1] - t[i - 1])
            peak = y[i] - 0.25 * (y[i - 1] - y[i + 1]) * shift
            return float(t[i] + shift * h), float(peak)
    raise UsageError("no interior maximum in the trace")


def pi_pulse(trace: TimeTrace):
    """(pi time, pi-pulse fidelity) read off the first maximum of a Rabi trace."""
    return first_maximum(trace.centers, trace.counts)


def simulate_detuned_rabi_map(emitter, s, delta_grid, pulse_length, bins=200,
                              ensemble=None, n_nodes=64) -> List[TimeTrace]:
    deltas = np.asarray(delta_grid, dtype=float)
    if deltas.size == 0:
        raise UsageError("empty detuning grid")
    return [simulate_rabi(emitter, s, pulse_length, bins, ensemble, d, n_nodes)
            for d in deltas]


def dominant_frequency(times, values, pad_factor=16):
    """Angular frequency of the strongest FFT component (parabolic peak refine).

    A quadratic trend is removed first and components slower than one cycle
    per record are ignored, so a damped approach to saturation does not
    masquerade as the oscillation.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if y.size < 4:
        raise UsageError("need at least 4 samples")
    y = y - np.polyval(np.polyfit(t - t[0], y, 2), t - t[0])
    y = y * np.hanning(y.size)
    n = pad_factor * y.size
    spec = np.abs(np.fft.rfft(y, n))
    dt = t[1] - t[0]
    freqs = 2 * math.pi * np.fft.rfftfreq(n, dt)
    k_min = max(1, int(math.ceil(n * dt / (t[-1] - t[0] + dt))))
    k = int(np.argmax(spec[k_min:])) + k_min
    if 0 < k < spec.size - 1:
        a, b, c = np.log(spec[k - 1:k + 2] + 1e-300)
        shift = 0.5 * (a - c) / (a - 2 * b + c)
    else:
        shift = 0.0
    return float((k + shift) * (freqs[1] - freqs[0]))


def dark_state_pumping_curve(params, bin_edges) -> TimeTrace:
    """Bi-exponential A1 exp(-t/tau1) + A2 exp(-t/tau2) + C at the bin centres.

    ``params = (A1, tau1, A2, tau2, C)``.
    """
    a1, tau1, a2, tau2, c = params
    if not (tau1 > 0 and tau2 > 0):
        raise DomainError("decay times must be positive")
    edges = np.asarray(bin_edges, dtype=float)
    t = 0.5 * (edges[1:] + edges[:-1])
    return TimeTrace(edges, a1 * np.exp(-t / tau1) + a2 * np.exp(-t / tau2) + c)


# --------------------------------------------------------------------------
# Ramsey / Hahn echo


def _pulse(angle, omega, phase):
    if not omega > 0:
        raise DomainError("Rabi rate must be positive")
    return DriveSegment(angle / omega, omega, 0.0, phase, laser_on=True)


def _finish(segments, readout_length, shot_length):
    control = math.fsum(s.duration for s in segments)
    tail = readout_length
    if shot_length is not None:
        tail = shot_length - control
        if tail < readout_length:
            raise UsageError(f"shot length {shot_length} ns too short for control "
                             f"{control:.3f} ns plus readout {readout_length} ns")
    segments.append(DriveSegment.free(tail))
    return PulseSequence(tuple(segments), (control, control + readout_length))


def build_ramsey(tau: float, readout_phase: float, omega: float,
                 readout_length: float = DEFAULT_READOUT_LENGTH,
                 shot_length: Optional[float] = None) -> PulseSequence:
    """pi/2(0) - free tau - pi/2(readout_phase) - readout."""
    if tau < 0:
        raise DomainError("free-precession time must be >= 0")
    segs = [_pulse(math.pi / 2, omega, 0.0), DriveSegment.free(tau),
            _pulse(math.pi / 2, omega, readout_phase)]
    return _finish(segs, readout_length, shot_length)


def build_hahn(tau: float, readout_phase: float, omega: float,
               readout_length: float = DEFAULT_READOUT_LENGTH,
               shot_length: Optional[float] = None) -> PulseSequence:
    """pi/2(0) - tau/2 - pi(0) - tau/2 - pi/2(readout_phase) - readout."""
    if tau < 0:
        raise DomainError("free-precession time must be >= 0")
    segs = [_pulse(math.pi / 2, omega, 0.0), DriveSegment.free(0.5 * tau),
            _pulse(math.pi, omega, 0.0), DriveSegment.free(0.5 * tau),
            _pulse(math.pi / 2, omega, readout_phase)]
    return _finish(segs, readout_length, shot_length)


def rotation_superoperator(angle, phase):
    """Superoperator of the instantaneous rotation exp(-i angle/2 (cos phi sx + sin phi sy))."""
    n = math.cos(phase) * SX + math.sin(phase) * SY
    u = math.cos(0.5 * angle) * np.eye(2) - 1j * math.sin(0.5 * angle) * n
    return np.kron(u, u.conj())


def _drive_props(seg, emitter, nodes, ideal):
    if ideal:
        rot = rotation_superoperator(seg.rabi_rate * seg.duration, seg.phase)
        return np.broadcast_to(rot, (nodes.size, 4, 4))
    return segment_propagators(seg, emitter, nodes)


def simulate_sequence(sequence: PulseSequence, emitter: EmitterParams,
                      ensemble: Optional[DetuningEnsemble] = None, ideal: bool = False,
                      readout: str = "final", n_nodes: int = 64) -> float:
    """Ensemble-averaged readout signal of one shot, starting in the ground state.

    ``readout="final"``: excited population right after the last drive segment.
    ``readout="window"``: time integral (ns) of the excited population over the
    readout window, which must only overlap undriven segments.
    """
    ens = ensemble_for(emitter, n_nodes) if ensemble is None else ensemble
    nodes = ens.nodes
    v = np.broadcast_to(_GROUND_VEC, (nodes.size, 4)).copy()
    driven = [i for i, s in enumerate(sequence.segments) if s.laser_on and s.rabi_rate]
    last = driven[-1] if driven else -1
    if readout == "final":
        for seg in sequence.segments[:last + 1]:
            props = (_drive_props(seg, emitter, nodes, ideal) if seg.laser_on and seg.rabi_rate
                     else segment_propagators(seg, emitter, nodes))
            v = np.einsum("nij,nj->ni", props, v)
        return float(ens.weights @ v[:, 3].real)
    if readout != "window":
        raise UsageError(f"unknown readout mode {readout!r}")
    start, end = sequence.readout_window
    t = 0.0
    total = np.zeros(nodes.size)
    g0 = emitter.gamma0
    for seg in sequence.segments:
        lo, hi = max(start, t), min(end, t + seg.duration)
        driving = seg.laser_on and seg.rabi_rate
        if hi > lo:
            if driving:
                raise UsageError("readout window overlaps a driven segment")
            p11 = v[:, 3].real
            # undriven: rho11(t' ) = rho11(t) exp(-g0 (t' - t))
            if g0 > 0:
                total += p11 * (np.exp(-g0 * (lo - t)) - np.exp(-g0 * (hi - t))) / g0
            else:
                total += p11 * (hi - lo)
        props = (_drive_props(seg, emitter, nodes, ideal) if driving
                 else segment_propagators(seg, emitter, nodes))
        v = np.einsum("nij,nj->ni", props, v)
        t += seg.duration
    return float(ens.weights @ total)


_BUILDERS = {"ramsey": build_ramsey, "hahn": build_hahn}
# sign that makes the (phase=pi) - (phase=0) readout difference positive at tau=0
_ORIENTATION = {"ramsey": -1.0, "hahn": 1.0}


@dataclass(frozen=True, eq=False)
class ContrastCurve:
    taus: np.ndarray
    contrast: np.ndarray
    raw: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        object.__setattr__(self, "contrast", np.asarray(self.contrast, dtype=float))
        if self.taus.shape != self.contrast.shape:
            raise UsageError("taus and contrast lengths differ")
        if not np.all(np.isfinite(self.contrast)):
            raise UsageError("contrast values must be finite")


def sequence_readouts(kind, taus, phases, emitter, omega, ensemble=None, ideal=False,
                      n_nodes=64):
    """Ensemble-averaged final excited population, shape (len(phases), len(taus)).

    Vectorised over free-precession times and detuning nodes; equivalent to
    calling :func:`simulate_sequence` on each built sequence.
    """
    if kind not in _BUILDERS:
        raise UsageError(f"unknown sequence kind {kind!r}")
    ens = ensemble_for(emitter, n_nodes) if ensemble is None else ensemble
    nodes = ens.nodes
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise DomainError("free-precession times must be >= 0")

    def props(angle, phase):
        return _drive_props(_pulse(angle, omega, phase), emitter, nodes, ideal)

    g0, gpd = emitter.gamma0, emitter.gamma_pd(False)
    v = np.einsum("nij,j->ni", props(math.pi / 2, 0.0), _GROUND_VEC)
    if kind == "ramsey":
        free = free_propagator(taus[:, None], nodes[None, :], g0, gpd)
        v = np.einsum("tnij,nj->tni", free, v)
    else:
        half = free_propagator(0.5 * taus[:, None], nodes[None, :], g0, gpd)
        v = np.einsum("tnij,nj->tni", half, v)
        v = np.einsum("nij,tnj->tni", props(math.pi, 0.0), v)
        v = np.einsum("tnij,tnj->tni", half, v)
    out = np.empty((len(phases), taus.size))
    for k, phase in enumerate(phases):
        row = props(math.pi / 2, phase)[:, 3, :]
        pop = np.einsum("nj,tnj->tn", row, v).real
        out[k] = pop @ ens.weights
    return out


def raw_contrast(kind, taus, emitter, omega, ensemble=None, ideal=False, n_nodes=64):
    """Oriented excited-population difference between readout phases pi and 0."""
    pops = sequence_readouts(kind, taus, (0.0, math.pi), emitter, omega, ensemble,
                             ideal, n_nodes)
    return _ORIENTATION[kind] * (pops[1] - pops[0])


def contrast_curve(kind, taus, emitter, omega, ensemble=None, ideal=False,
                   n_nodes=64) -> ContrastCurve:
    """Readout contrast between phases pi and 0, normalised to its tau=0 value."""
    taus = np.asarray(taus, dtype=float)
    grid = np.concatenate([[0.0], taus])
    raw = raw_contrast(kind, grid, emitter, omega, ensemble, ideal, n_nodes)
    if not raw[0] > 0:
        raise DegenerateError(f"contrast at tau=0 is {raw[0]!r}; cannot normalise")
    return ContrastCurve(taus, raw[1:] / raw[0], raw[1:])


def contrast_from_sequence(kind, tau, emitter, omega, ensemble=None, ideal=False,
                           readout="final", n_nodes=64, **build_kw) -> float:
    """One normalised contrast point via explicit sequence construction."""
    if kind not in _BUILDERS:
        raise UsageError(f"unknown sequence kind {kind!r}")
    build = _BUILDERS[kind]

    def diff(t):
        r = [simulate_sequence(build(t, ph, omega, **build_kw), emitter, ensemble,
                               ideal, readout, n_nodes) for ph in (0.0, math.pi)]
        return _ORIENTATION[kind] * (r[1] - r[0])

    ref = diff(0.0)
    if not ref > 0:
        raise DegenerateError(f"contrast at tau=0 is {ref!r}; cannot normalise")
    return diff(tau) / ref


def coherence_limit(taus, t1):
    """Contrast envelope exp(-tau / (2 T1)) of a lifetime-limited coherence (T2 = 2 T1)."""
    return np.exp(-np.asarray(taus, dtype=float) / (2.0 * t1))
