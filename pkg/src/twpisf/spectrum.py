"""
Eigen-decomposition of the grid Hamiltonian and thermal (Boltzmann) weights.

Eigenvectors are stored with unit *Euclidean* norm; the physical wave function
on the grid is ``vector / sqrt(dx)`` so that ``dx * sum |phi|^2 = 1``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Optional
import math

import numpy as np
from scipy import linalg

from .errors import ConfigError, DomainError, NumericError, UsageError
from .system import Hamiltonian, Kinetic
from .units import KB

DEFAULT_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class BlochLabels:
    """Crystal-momentum and band label of each eigenstate of a lattice Hamiltonian."""

    kappa_index: np.ndarray    # s, crystal momentum 2 pi s / L
    band_index: np.ndarray     # b, position inside the cell spectrum
    cell_vectors: List[np.ndarray] = field(repr=False)   # per s, P x P, columns by band


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray
    hamiltonian: Hamiltonian = field(repr=False)
    _vectors: Optional[np.ndarray] = field(default=None, repr=False)
    bloch: Optional[BlochLabels] = field(default=None, repr=False)

    @property
    def grid(self):
        return self.hamiltonian.grid

    @property
    def size(self) -> int:
        return self.energies.size

    @cached_property
    def vectors(self) -> np.ndarray:
        """Eigenvectors as columns (n_points x n_states), Euclidean-orthonormal."""
        if self._vectors is not None:
            return self._vectors
        H, lab = self.hamiltonian, self.bloch
        P, Nc = H.cell_points, H.n_cells
        out = np.empty((H.dimension, self.size), dtype=complex)
        cells = np.arange(Nc)
        for n in range(self.size):
            s, b = lab.kappa_index[n], lab.band_index[n]
            phase = np.exp(2j * np.pi * s * cells / Nc) / math.sqrt(Nc)
            out[:, n] = np.outer(phase, lab.cell_vectors[s][:, b]).ravel()
        return out

    def residual(self, n: int) -> float:
        v = self.vectors[:, n]
        return float(np.linalg.norm(self.hamiltonian.matvec(v) - self.energies[n] * v))


def diagonalize(H: Hamiltonian, method: str = "auto") -> Spectrum:
    """Full eigen-decomposition of ``H``, energies ascending.

    ``method`` is ``"auto"`` (tridiagonal solver for box fd3, Bloch reduction for
    lattice Hamiltonians, dense otherwise), ``"dense"`` or ``"bloch"``.
    """
    try:
        if method == "bloch" or (method == "auto" and H.cell_points is not None):
            return _diagonalize_bloch(H)
        if method == "auto" and H.kinetic is Kinetic.FD3 and not H.grid.periodic:
            E, U = linalg.eigh_tridiagonal(H.diagonal, H.off_diagonal, lapack_driver="stemr")
        elif method in ("auto", "dense"):
            E, U = linalg.eigh(H.to_dense(), driver="evr")
        else:
            raise UsageError(f"unknown diagonalization method {method!r}")
    except linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed for {H.dimension}x{H.dimension} "
                           f"{H.structure} Hamiltonian: {exc}") from exc
    E = np.ascontiguousarray(E)
    E.setflags(write=False)
    return Spectrum(E, H, _fix_signs(np.ascontiguousarray(U), H.grid.periodic))


def _fix_signs(U: np.ndarray, periodic: bool) -> np.ndarray:
    """Deterministic eigenvector signs, stable under grid refinement.

    A packet's random phase multiplies one eigenvector, so a sign flip changes
    that sample.  On a box every eigenfunction has a non-zero slope at the left
    wall, so the first interior value fixes the sign; elsewhere the largest
    component is made positive.
    """
    if periodic:
        ref = U[np.argmax(np.abs(U), axis=0), np.arange(U.shape[1])]
    else:
        ref = U[0]
    U *= np.where(ref < 0, -1.0, 1.0)
    return U


def _diagonalize_bloch(H: Hamiltonian) -> Spectrum:
    if H.cell_points is None:
        raise UsageError("Bloch diagonalization needs a lattice Hamiltonian")
    P, Nc = H.cell_points, H.n_cells
    energies, svals, bvals, cell_vectors = [], [], [], []
    for s in range(Nc):
        try:
            e, v = np.linalg.eigh(H.bloch_cell(s))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"cell eigensolver failed at crystal momentum index {s}: {exc}") from exc
        # the largest cell component real and positive
        ref = v[np.argmax(np.abs(v), axis=0), np.arange(P)]
        v = v * (np.abs(ref) / ref).conj()
        energies.append(e)
        svals.append(np.full(P, s))
        bvals.append(np.arange(P))
        cell_vectors.append(v)
    E = np.concatenate(energies)
    order = np.argsort(E, kind="stable")
    E = E[order]
    E.setflags(write=False)
    labels = BlochLabels(np.concatenate(svals)[order], np.concatenate(bvals)[order], cell_vectors)
    return Spectrum(E, H, None, labels)


# --- thermal weights --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ThermalWeights:
    """Amplitudes w_n = exp(-E_n / 2kT) / sqrt(Q) of the retained states.

    Retained states are the contiguous low-energy block with
    ``exp(-(E_n - E_0) / 2kT) >= threshold``; Q is summed over that block, so
    ``sum w_n^2 = 1``.
    """

    temperature: float
    amplitudes: np.ndarray
    energies: np.ndarray
    log_partition_function: float
    threshold: float

    @property
    def count(self) -> int:
        return self.amplitudes.size

    @property
    def retained_indices(self) -> np.ndarray:
        return np.arange(self.count)

    @property
    def populations(self) -> np.ndarray:
        return self.amplitudes**2

    @property
    def partition_function(self) -> float:
        return math.exp(self.log_partition_function)


def thermal_weights(spectrum: Spectrum, temperature: float,
                    threshold: float = DEFAULT_THRESHOLD) -> ThermalWeights:
    if not temperature > 0:
        raise DomainError(f"temperature must be positive, got {temperature!r}")
    if not 0 < threshold < 1:
        raise ConfigError(f"weight threshold must lie in (0, 1), got {threshold!r}")
    kT = KB * temperature
    E = spectrum.energies
    half = np.exp(-(E - E[0]) / (2.0 * kT))
    keep = half >= threshold
    # contiguous from the ground state
    n_keep = int(np.argmin(keep)) if not keep.all() else E.size
    half = half[:n_keep]
    s = float(np.sum(half**2))
    amps = half / math.sqrt(s)
    amps.setflags(write=False)
    log_q = -E[0] / kT + math.log(s)
    energies = E[:n_keep].copy()
    energies.setflags(write=False)
    return ThermalWeights(float(temperature), amps, energies, log_q, float(threshold))


def write_spectrum_dump(path, spectrum: Spectrum, weights: ThermalWeights) -> Path:
    """Text table ``index energy_meV weight2`` (weight2 = 0 beyond the retained set)."""
    path = Path(path)
    w2 = np.zeros(spectrum.size)
    w2[:weights.count] = weights.populations
    with path.open("w") as fh:
        fh.write("# index energy_meV weight2\n")
        for n, (e, p) in enumerate(zip(spectrum.energies, w2)):
            fh.write(f"{n} {e:.12g} {p:.12g}\n")
    return path


# --- bands ------------------------------------------------------------------

@dataclass(frozen=True)
class BandReport:
    count: int
    lower: np.ndarray
    upper: np.ndarray
    n_states: np.ndarray
    populations: Optional[np.ndarray] = None   # summed Boltzmann weight, relative to band 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower


def band_report(spectrum: Spectrum, barrier_energy: float,
                temperature: Optional[float] = None) -> BandReport:
    """Group the levels below ``barrier_energy`` into bands separated by gaps.

    A level opens a new band when its gap to the previous level exceeds three
    times the median gap of the current band.  Gaps below a resolution floor
    of 1e-6 (barrier - E_0) count as degeneracies (Bloch +k/-k partners, or a
    tunnelling band too narrow to resolve) and are left out of the median; a
    band holding more than one level but no resolved gap yet is closed by the
    first resolved gap if that gap exceeds three times the band's span plus
    the floor.
    """
    if not spectrum.grid.periodic:
        raise UsageError("band_report needs a periodic spectrum")
    E = np.asarray(spectrum.energies)
    E = E[E < barrier_energy]
    if E.size == 0:
        return BandReport(0, np.empty(0), np.empty(0), np.empty(0, int))
    floor = 1e-6 * max(barrier_energy - float(E[0]), 0.0)
    starts = [0]
    gaps: List[float] = []
    for i in range(1, E.size):
        gap = E[i] - E[i - 1]
        if gap <= floor:
            continue
        if gaps:
            new = gap > 3.0 * float(np.median(gaps))
        else:
            span = E[i - 1] - E[starts[-1]]
            new = i - starts[-1] > 1 and gap > 3.0 * (span + floor)
        if new:
            starts.append(i)
            gaps = []
        else:
            gaps.append(gap)
    bounds = starts + [E.size]
    lower = np.array([E[a] for a in bounds[:-1]])
    upper = np.array([E[b - 1] for b in bounds[1:]])
    counts = np.diff(bounds)
    pops = None
    if temperature is not None:
        kT = KB * temperature
        sums = np.array([np.sum(np.exp(-(E[a:b] - E[0]) / kT)) for a, b in zip(bounds[:-1], bounds[1:])])
        pops = sums / sums[0]
    return BandReport(len(starts), lower, upper, counts, pops)
