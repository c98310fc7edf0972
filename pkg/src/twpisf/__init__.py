"""Intermediate scattering functions from stochastic thermal wave packets."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, NumericError, TraceIOError, TwpIsfError, UnitError, UsageError
from .units import HBAR, KB, AMU, convert, thermal_time, thermal_wavelength
from .system import (Boundary, Free, Harmonic, Kinetic, PeriodicCosine, Tabulated, build_grid,
                     build_hamiltonian, eval_potential)
from .spectrum import band_report, diagonalize, thermal_weights
from .ensemble import assemble_twp, draw_phases, sample_packet
from .dynamics import chi_ek, chi_ke, kick, kick_matrix, snap_q
from .isf import (IsfTrace, TimeGrid, isf_ensemble, isf_exact_trace, isf_sample, make_time_grid,
                  msd_from_isf, read_trace_csv, write_trace_csv)
from .analysis import IsfModelParams, ballistic_isf, dsf, eval_isf_model, fit_isf_model
from .config import load_config, parse_config
