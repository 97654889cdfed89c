"""Simulation and analysis of a resonantly driven two-level quantum emitter.

Times are in ns and rates are angular (rad/ns); quantities quoted as
Gamma/2pi in MHz go through :func:`qemitter.emitter.convert`.
"""

from .corrections import (InterferometerModel, collection_efficiency_budget,
                          corrected_visibility, dark_count_corrected_purity, g2_from_sbr,
                          p_parallel_full, p_parallel_ideal_bs, p_parallel_partial,
                          raw_visibility, signal_to_background)
from .emitter import (DensityMatrix, DriveSegment, EmitterParams, PulseSequence, TimeTrace,
                      convert, homogeneous_linewidth, normalized_linewidth_theta,
                      transform_limited_linewidth)
from .errors import (DegenerateError, DomainError, NumericalError, QEmitterError,
                     RankDeficiencyError, UsageError)
from .fits import (fit_biexponential, fit_gaussian, fit_hahn, fit_lifetime, fit_lorentzian,
                   fit_q_saturation, fit_rabi, fit_ramsey)
from .fitting import FitProblem, FitResult, FreeParameter, fit_least_squares
from .hom import (HomConfig, HomResult, coincidence_probability, mc_phase_oracle, visibility,
                  visibility_vs_theta, visibility_vs_window)
from .lindblad import (build_liouvillian, propagate_rk4, propagate_segment, steady_state)
from .sequences import (ContrastCurve, build_hahn, build_ramsey, contrast_curve,
                        contrast_from_sequence, dark_state_pumping_curve, quality_factor,
                        rabi_from_saturation, raw_contrast, saturation_from_rabi,
                        simulate_detuned_rabi_map, simulate_rabi, simulate_sequence)
from .spectral import (DetuningEnsemble, gauss_hermite_ensemble, inhomogeneous_average,
                       monte_carlo_ensemble, ple_lineshape)

__version__ = "0.1.0"
