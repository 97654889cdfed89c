"""Shared physical types, unit handling and linewidth relations.

Internal units: time in ns, every frequency-like quantity as an angular
rate in rad/ns. Conversions happen once, at the I/O boundary, through
:func:`convert`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, UsageError

TWO_PI = 2.0 * math.pi

# factor that takes a value in the unit to the internal unit of its family
_FREQ_UNITS = {"MHz": TWO_PI * 1e-3, "GHz": TWO_PI, "rad/ns": 1.0}
_TIME_UNITS = {"ns": 1.0, "us": 1e3, "µs": 1e3, "ms": 1e6}


def _family(unit):
    if unit in _FREQ_UNITS:
        return _FREQ_UNITS
    if unit in _TIME_UNITS:
        return _TIME_UNITS
    raise UsageError(f"unknown unit {unit!r}; expected one of "
                     f"{sorted(_FREQ_UNITS) + sorted(_TIME_UNITS)}")


def convert(value, from_unit: str, to_unit: str):
    """Convert between MHz, GHz, rad/ns (frequency) or ns, us, ms (time)."""
    src, dst = _family(from_unit), _family(to_unit)
    if src is not dst:
        raise UsageError(f"cannot convert {from_unit} to {to_unit}")
    if from_unit == to_unit:
        return value
    # multiply then divide keeps MHz -> rad/ns -> MHz exact to an ulp
    return value * src[from_unit] / dst[to_unit]


def mhz_to_angular(f_mhz):
    return convert(f_mhz, "MHz", "rad/ns")


def angular_to_mhz(w):
    return convert(w, "rad/ns", "MHz")


def transform_limited_linewidth(t1: float) -> float:
    """Fourier-limited linewidth 1/(2 pi T1) in MHz for a lifetime in ns."""
    if not t1 > 0:
        raise DomainError(f"lifetime must be positive, got {t1}")
    return 1e3 / (TWO_PI * t1)


def homogeneous_linewidth(gamma0: float, gamma_pd: float) -> float:
    """Homogeneous FWHM (angular) ``gamma0 + 2 gamma_pd``."""
    if gamma0 < 0 or gamma_pd < 0:
        raise DomainError("rates must be non-negative")
    return gamma0 + 2.0 * gamma_pd


def normalized_linewidth_theta(gamma0: float, gamma_pd: float) -> float:
    """Homogeneous linewidth in units of the Fourier limit, ``1 + 2 gamma_pd/gamma0``."""
    if not gamma0 > 0:
        raise DomainError("gamma0 must be positive")
    if gamma_pd < 0:
        raise DomainError("gamma_pd must be non-negative")
    return 1.0 + 2.0 * gamma_pd / gamma0


@dataclass(frozen=True)
class EmitterParams:
    """Rates of the two-level emitter.

    ``gamma_pd_*`` are angular rates (rad/ns). ``t2_star=None`` switches off
    quasi-static spectral diffusion.
    """

    t1_lifetime: float
    gamma_pd_intrinsic: float = 0.0
    gamma_pd_laser: float = 0.0
    t2_star: Optional[float] = None

    def __post_init__(self):
        if not self.t1_lifetime > 0:
            raise DomainError(f"t1_lifetime must be positive, got {self.t1_lifetime}")
        if self.gamma_pd_intrinsic < 0 or self.gamma_pd_laser < 0:
            raise DomainError("pure-dephasing rates must be non-negative")
        if self.t2_star is not None and not self.t2_star > 0:
            raise DomainError(f"t2_star must be positive when given, got {self.t2_star}")

    @classmethod
    def from_mhz(cls, t1_ns, gamma_pd_intrinsic_mhz=0.0, gamma_pd_laser_mhz=0.0,
                 t2_star_ns=None):
        """Build from rates quoted as Gamma/2pi in MHz."""
        return cls(t1_ns, mhz_to_angular(gamma_pd_intrinsic_mhz),
                   mhz_to_angular(gamma_pd_laser_mhz), t2_star_ns)

    @property
    def gamma0(self) -> float:
        return 1.0 / self.t1_lifetime

    def gamma_pd(self, laser_on: bool = True) -> float:
        if laser_on:
            return self.gamma_pd_intrinsic + self.gamma_pd_laser
        return self.gamma_pd_intrinsic

    def replace(self, **changes) -> "EmitterParams":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class DriveSegment:
    duration: float
    rabi_rate: float = 0.0
    detuning: float = 0.0
    phase: float = 0.0
    laser_on: bool = True

    def __post_init__(self):
        if self.duration < 0:
            raise DomainError(f"segment duration must be >= 0, got {self.duration}")
        if not self.laser_on and self.rabi_rate != 0.0:
            raise DomainError("a laser-off segment cannot carry a Rabi rate")

    @classmethod
    def free(cls, duration: float) -> "DriveSegment":
        return cls(duration, 0.0, 0.0, 0.0, laser_on=False)


@dataclass(frozen=True)
class PulseSequence:
    segments: Tuple[DriveSegment, ...]
    readout_window: Tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise UsageError("a pulse sequence needs at least one segment")
        start, end = self.readout_window
        if not (0.0 <= start <= end <= self.duration + 1e-12):
            raise UsageError(
                f"readout window {self.readout_window} outside sequence of "
                f"length {self.duration}")

    @property
    def duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """2x2 density operator in the basis (|0> ground, |1> excited)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex)
        if arr.shape != (2, 2):
            raise UsageError(f"density matrix must be 2x2, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def ground(cls):
        return cls(np.array([[1, 0], [0, 0]]))

    @classmethod
    def excited(cls):
        return cls(np.array([[0, 0], [0, 1]]))

    @classmethod
    def from_vector(cls, vec):
        return cls(np.asarray(vec).reshape(2, 2))

    @property
    def vec(self) -> np.ndarray:
        """Row-major vectorisation (rho00, rho01, rho10, rho11)."""
        return self.data.reshape(4).copy()

    @property
    def excited_population(self) -> float:
        return float(self.data[1, 1].real)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.data @ self.data)))

    def violations(self, herm_tol=1e-12, trace_tol=1e-12, eig_tol=1e-10):
        """List of broken invariants; empty when the state is physical."""
        out = []
        d = self.data
        if not np.all(np.isfinite(d)):
            return ["non-finite entries"]
        if abs(d[1, 0] - np.conj(d[0, 1])) > herm_tol or abs(d[0, 0].imag) > herm_tol \
                or abs(d[1, 1].imag) > herm_tol:
            out.append("not Hermitian")
        if abs(np.trace(d) - 1.0) > trace_tol:
            out.append(f"trace {np.trace(d).real:.3e} != 1")
        eig = np.linalg.eigvalsh(0.5 * (d + d.conj().T))
        if eig.min() < -eig_tol:
            out.append(f"negative eigenvalue {eig.min():.3e}")
        return out

    def is_valid(self, **tols) -> bool:
        return not self.violations(**tols)

    def __eq__(self, other):
        return isinstance(other, DensityMatrix) and np.array_equal(self.data, other.data)

    def __repr__(self):
        return f"DensityMatrix({self.data.tolist()})"


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Histogram-like series: ``counts[i]`` belongs to [edges[i], edges[i+1])."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise UsageError("need at least two bin edges")
        if np.any(np.diff(edges) <= 0):
            raise UsageError("bin edges must be strictly increasing")
        if counts.shape != (edges.size - 1,):
            raise UsageError(f"{counts.size} counts for {edges.size - 1} bins")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_centers(cls, centers: Sequence[float], counts) -> "TimeTrace":
        """Rebuild edges as midpoints between centres (end bins mirrored)."""
        c = np.asarray(centers, dtype=float)
        if c.size == 1:
            edges = np.array([c[0] - 0.5, c[0] + 0.5])
        else:
            mid = 0.5 * (c[1:] + c[:-1])
            edges = np.concatenate([[c[0] - (mid[0] - c[0])], mid,
                                    [c[-1] + (c[-1] - mid[-1])]])
        return cls(edges, counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def __len__(self):
        return self.counts.size


def uniform_bins(length: float, bins) -> np.ndarray:
    """Edges for ``bins`` equal bins on [0, length], or pass explicit edges through."""
    if np.ndim(bins) == 0:
        n = int(bins)
        if n < 1:
            raise UsageError("need at least one bin")
        return np.linspace(0.0, length, n + 1)
    return np.asarray(bins, dtype=float)
