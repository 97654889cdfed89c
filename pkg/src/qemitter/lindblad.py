"""Two-level Lindblad dynamics for piecewise-constant drive segments.

Density matrices are vectorised row-major, ``vec = (rho00, rho01, rho10, rho11)``,
so that ``vec(A rho B) = kron(A, B.T) @ vec(rho)``.

Within a segment the generator is constant and the evolution is the exact
matrix exponential; :func:`propagate_rk4` integrates the same equation in
operator form and is kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np
from scipy.linalg import expm

from .emitter import DensityMatrix, DriveSegment, EmitterParams
from .errors import DegenerateError, NumericalError, UsageError

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
_I2 = np.eye(2, dtype=complex)


def hamiltonian(rabi_rate, detuning, phase=0.0):
    """H = (Omega/2)(cos(phi) sx + sin(phi) sy) + (delta/2) sz, in rad/ns."""
    return (0.5 * rabi_rate * (math.cos(phase) * SX + math.sin(phase) * SY)
            + 0.5 * detuning * SZ)


def collapse_operators(gamma0, gamma_pd):
    return [math.sqrt(gamma0) * SIGMA_MINUS, math.sqrt(gamma_pd / 2.0) * SZ]


def _commutator_super(h):
    return -1j * (np.kron(h, _I2) - np.kron(_I2, h.T))


def _dissipator_super(c):
    cdc = c.conj().T @ c
    return (np.kron(c, c.conj()) - 0.5 * np.kron(cdc, _I2)
            - 0.5 * np.kron(_I2, cdc.T))


# generator of the detuning term; L is affine in the detuning
_DETUNING_SUPER = _commutator_super(0.5 * SZ)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    matrix: np.ndarray

    def apply(self, vec):
        return self.matrix @ vec


def _segment_rates(segment: DriveSegment, emitter: EmitterParams):
    if segment.laser_on:
        return segment.rabi_rate, emitter.gamma_pd(True)
    # free precession: no drive and no laser-induced dephasing
    return 0.0, emitter.gamma_pd(False)


def _base_super(segment, emitter):
    """Liouvillian at zero detuning."""
    omega, gamma_pd = _segment_rates(segment, emitter)
    m = _commutator_super(hamiltonian(omega, 0.0, segment.phase))
    for c in collapse_operators(emitter.gamma0, gamma_pd):
        m = m + _dissipator_super(c)
    return m


def build_liouvillian(segment: DriveSegment, emitter: EmitterParams,
                      extra_detuning: float = 0.0) -> Liouvillian:
    delta = segment.detuning + extra_detuning
    return Liouvillian(_base_super(segment, emitter) + delta * _DETUNING_SUPER)


def liouvillian_batch(segment, emitter, extra_detunings) -> np.ndarray:
    """Stack of generators, one per extra detuning, shape (n, 4, 4)."""
    deltas = segment.detuning + np.atleast_1d(np.asarray(extra_detunings, float))
    return _base_super(segment, emitter)[None] + deltas[:, None, None] * _DETUNING_SUPER[None]


def free_propagator(duration, detunings, gamma0, gamma_pd):
    """Closed-form propagator of an undriven segment, shape (..., 4, 4).

    Broadcasts over ``duration`` and ``detunings``.
    """
    t = np.asarray(duration, dtype=float)
    d = np.asarray(detunings, dtype=float)
    t, d = np.broadcast_arrays(t, d)
    decay = np.exp(-gamma0 * t)
    kappa = 0.5 * gamma0 + gamma_pd
    coh = np.exp((-1j * d - kappa) * t)
    p = np.zeros(t.shape + (4, 4), dtype=complex)
    p[..., 0, 0] = 1.0
    p[..., 0, 3] = -np.expm1(-gamma0 * t)
    p[..., 1, 1] = coh
    p[..., 2, 2] = np.conj(coh)
    p[..., 3, 3] = decay
    return p


def segment_propagators(segment, emitter, extra_detunings) -> np.ndarray:
    """Propagators over the whole segment for each extra detuning, (n, 4, 4)."""
    extra = np.atleast_1d(np.asarray(extra_detunings, float))
    omega, gamma_pd = _segment_rates(segment, emitter)
    if omega == 0.0:
        return free_propagator(segment.duration, segment.detuning + extra,
                               emitter.gamma0, gamma_pd)
    return expm(liouvillian_batch(segment, emitter, extra) * segment.duration)


def _as_vec(rho):
    if isinstance(rho, DensityMatrix):
        return rho.vec
    return np.asarray(rho, dtype=complex).reshape(4)


def _checked(vec, context):
    if not np.all(np.isfinite(vec)):
        raise NumericalError(f"non-finite density matrix during {context}: {vec}")
    return DensityMatrix.from_vector(vec)


def propagate_segment(rho, segment: DriveSegment, emitter: EmitterParams,
                      extra_detuning: float = 0.0,
                      sample_times: Sequence[float] | None = None) -> List[DensityMatrix]:
    """States at each sample time (measured from the segment start).

    Each sample uses its own exponential ``expm(L t)``, so errors do not
    accumulate along the grid. Defaults to the segment end.
    """
    times = np.array([segment.duration] if sample_times is None else sample_times,
                     dtype=float)
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0
                       or times[-1] > segment.duration * (1 + 1e-12) + 1e-15):
        raise UsageError("sample times must be sorted and lie within the segment")
    gen = build_liouvillian(segment, emitter, extra_detuning).matrix
    v0 = _as_vec(rho)
    props = expm(gen[None] * times[:, None, None])
    out = props @ v0
    return [_checked(v, "propagate_segment") for v in out]


def lindblad_rhs(rho: np.ndarray, h: np.ndarray, collapse: Iterable[np.ndarray]) -> np.ndarray:
    """d rho/dt in operator form (used by the RK4 oracle)."""
    drho = -1j * (h @ rho - rho @ h)
    for c in collapse:
        cd = c.conj().T
        cdc = cd @ c
        drho = drho + c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)
    return drho


def propagate_rk4(rho, segment: DriveSegment, emitter: EmitterParams,
                  extra_detuning: float = 0.0, dt: float = 1e-3) -> DensityMatrix:
    """Fixed-step classical RK4 over the whole segment.

    The step is shrunk to ``duration / ceil(duration / dt)`` so the end point
    is hit exactly.
    """
    state = rho.data.copy() if isinstance(rho, DensityMatrix) else \
        np.asarray(rho, dtype=complex).reshape(2, 2).copy()
    if segment.duration == 0:
        return DensityMatrix(state)
    if not dt > 0:
        raise UsageError("dt must be positive")
    if dt > segment.duration:
        raise UsageError(f"dt={dt} exceeds segment duration {segment.duration}")
    omega, gamma_pd = _segment_rates(segment, emitter)
    h = hamiltonian(omega, segment.detuning + extra_detuning, segment.phase)
    cs = collapse_operators(emitter.gamma0, gamma_pd)
    n = math.ceil(segment.duration / dt - 1e-9)
    step = segment.duration / n
    for _ in range(n):
        k1 = lindblad_rhs(state, h, cs)
        k2 = lindblad_rhs(state + 0.5 * step * k1, h, cs)
        k3 = lindblad_rhs(state + 0.5 * step * k2, h, cs)
        k4 = lindblad_rhs(state + step * k3, h, cs)
        state = state + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return _checked(state.reshape(4), "propagate_rk4")


def steady_state(segment: DriveSegment, emitter: EmitterParams,
                 extra_detuning: float = 0.0) -> DensityMatrix:
    """Unit-trace null vector of the generator."""
    gen = build_liouvillian(segment, emitter, extra_detuning).matrix
    _, sv, vh = np.linalg.svd(gen)
    scale = max(sv[0], 1e-300)
    if sv[-2] <= 1e-12 * scale:
        raise DegenerateError("steady state is not unique (null space dimension > 1)")
    v = vh[-1].conj()
    tr = v[0] + v[3]
    if abs(tr) < 1e-14:
        raise NumericalError("null vector has zero trace")
    v = v / tr
    # remove the arbitrary global phase residue left by the SVD
    v[0], v[3] = v[0].real, v[3].real
    v[1] = 0.5 * (v[1] + np.conj(v[2]))
    v[2] = np.conj(v[1])
    return _checked(v, "steady_state")
