"""
Spatial grids, model potentials and the discretized one-particle Hamiltonian.

Two kinetic-energy discretizations are available:

``fd3``
    3-point finite differences.  Tridiagonal on a box, tridiagonal plus two
    corner entries on a periodic grid.
``dvr``
    Spectrally accurate discrete variable representation: the sine basis on a
    box (eigenvalues of the free particle are exact), the plane-wave (Fourier)
    basis on a periodic grid.  The matrix is dense.

On a periodic grid whose potential repeats every ``cell_points`` points the
Hamiltonian commutes with lattice translations.  :meth:`Hamiltonian.bloch_cell`
returns the reduced ``cell_points x cell_points`` problem for each crystal
momentum, which the spectrum module uses instead of a dense diagonalization.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Union
import math

import numpy as np
from scipy import linalg

from .errors import ConfigError, DomainError, TraceIOError
from .units import AMU, HBAR2_OVER_AMU

MIN_POINTS = 16


class Boundary(str, Enum):
    BOX = "box"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D grid.

    Box grids hold only interior points, ``x_i = (i + 1) L / (n + 1)``; the wave
    function vanishes on both walls.  Periodic grids hold ``x_i = i L / n`` and
    point ``n`` would alias point 0.
    """

    boundary: Boundary
    length: float
    n_points: int

    @property
    def spacing(self) -> float:
        if self.boundary is Boundary.BOX:
            return self.length / (self.n_points + 1)
        return self.length / self.n_points

    @property
    def points(self) -> np.ndarray:
        i = np.arange(self.n_points, dtype=float)
        if self.boundary is Boundary.BOX:
            return (i + 1.0) * self.spacing
        return i * self.spacing

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC


def build_grid(boundary, length: float, n_points: int) -> Grid:
    boundary = Boundary(boundary)
    if not (length > 0) or not math.isfinite(length):
        raise ConfigError(f"grid length must be positive, got {length!r}")
    if int(n_points) != n_points or n_points < MIN_POINTS:
        raise ConfigError(f"grid needs an integer number of points >= {MIN_POINTS}, got {n_points!r}")
    return Grid(boundary, float(length), int(n_points))


# --- potentials -------------------------------------------------------------

@dataclass(frozen=True)
class Free:
    pass


@dataclass(frozen=True)
class Harmonic:
    """V = m omega^2 (x - x_c)^2 / 2 centred on the middle of the grid.

    ``omega`` in rad/ps.
    """

    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError(f"harmonic omega must be positive, got {self.omega!r}")


@dataclass(frozen=True)
class PeriodicCosine:
    """V = (V0 / 2) (1 - cos(2 pi x / a)): minima (V = 0) at cell origins."""

    amplitude: float     # meV
    cell_length: float   # Å

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ConfigError(f"cosine amplitude must be >= 0, got {self.amplitude!r}")
        if not self.cell_length > 0:
            raise ConfigError(f"cell length must be positive, got {self.cell_length!r}")


@dataclass(frozen=True)
class Tabulated:
    """Potential given point by point on the grid, no interpolation."""

    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float).copy())
        self.samples.setflags(write=False)


PotentialSpec = Union[Free, Harmonic, PeriodicCosine, Tabulated]


def _cell_count(spec: PeriodicCosine, grid: Grid) -> int:
    ratio = grid.length / spec.cell_length
    n_cells = int(round(ratio))
    if n_cells < 1 or abs(ratio - n_cells) > 1e-9 * max(1.0, ratio):
        raise ConfigError(
            f"cell length {spec.cell_length} A does not divide grid length {grid.length} A "
            f"into an integer number of cells ({ratio:.6f})")
    return n_cells


def eval_potential(spec: PotentialSpec, grid: Grid, mass: Optional[float] = None) -> np.ndarray:
    """Sample ``spec`` on ``grid`` (meV).  ``mass`` in u, needed for :class:`Harmonic` only."""
    x = grid.points
    if isinstance(spec, Free):
        return np.zeros(grid.n_points)
    if isinstance(spec, Harmonic):
        if mass is None or not mass > 0:
            raise DomainError("harmonic potential needs a positive mass")
        xc = 0.5 * grid.length
        return 0.5 * mass * AMU * spec.omega**2 * (x - xc) ** 2
    if isinstance(spec, PeriodicCosine):
        if grid.periodic:
            _cell_count(spec, grid)
        return 0.5 * spec.amplitude * (1.0 - np.cos(2.0 * np.pi * x / spec.cell_length))
    if isinstance(spec, Tabulated):
        if spec.samples.shape != (grid.n_points,):
            raise ConfigError(
                f"tabulated potential has {spec.samples.size} samples, grid has {grid.n_points}")
        return spec.samples.copy()
    raise TypeError(f"unknown potential spec {spec!r}")


def lattice_cell_points(spec: PotentialSpec, grid: Grid) -> Optional[int]:
    """Translation period of ``spec`` in grid points, or None if there is none to exploit."""
    if not grid.periodic:
        return None
    if isinstance(spec, Free):
        return 1
    if isinstance(spec, PeriodicCosine):
        n_cells = _cell_count(spec, grid)
        if grid.n_points % n_cells == 0:
            return grid.n_points // n_cells
    return None


def load_tabulated(path, grid: Grid) -> Tabulated:
    """Read a two-column (position Å, energy meV) file matching ``grid`` to 1e-9 Å."""
    try:
        data = np.loadtxt(Path(path), comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise TraceIOError(f"cannot read tabulated potential {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigError(f"{path}: expected two columns, found {data.shape[1]}")
    pos, energy = data[:, 0], data[:, 1]
    if np.any(np.diff(pos) <= 0):
        raise ConfigError(f"{path}: positions must be strictly increasing")
    if pos.size != grid.n_points or np.max(np.abs(pos - grid.points)) > 1e-9:
        raise ConfigError(f"{path}: positions do not match the grid points to 1e-9 A")
    return Tabulated(energy)


# --- Hamiltonian ------------------------------------------------------------

class Kinetic(str, Enum):
    FD3 = "fd3"
    DVR = "dvr"


def _sine_dvr_kinetic(n: int, length: float, prefactor_hbar2_2m: float) -> np.ndarray:
    j = np.arange(1, n + 1)
    S = math.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(j, j) / (n + 1))
    eps = prefactor_hbar2_2m * (np.pi * j / length) ** 2
    T = (S * eps) @ S
    return 0.5 * (T + T.T)


def _fourier_dvr_kinetic(n: int, length: float, prefactor_hbar2_2m: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    col = np.fft.ifft(prefactor_hbar2_2m * k**2).real
    T = linalg.circulant(col)
    return 0.5 * (T + T.T)


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Real symmetric grid Hamiltonian (meV)."""

    grid: Grid
    mass: float                      # u
    potential: np.ndarray = field(repr=False)
    kinetic: Kinetic = Kinetic.FD3
    cell_points: Optional[int] = None

    @property
    def dimension(self) -> int:
        return self.grid.n_points

    @property
    def structure(self) -> str:
        if self.kinetic is Kinetic.DVR:
            return "dense"
        return "tridiagonal+corners" if self.grid.periodic else "tridiagonal"

    @property
    def hbar2_2m(self) -> float:
        return HBAR2_OVER_AMU / (2.0 * self.mass)

    @property
    def kinetic_prefactor(self) -> float:
        """hbar^2 / (2 m dx^2), the finite-difference hopping energy."""
        return self.hbar2_2m / self.grid.spacing**2

    @property
    def n_cells(self) -> Optional[int]:
        if self.cell_points is None:
            return None
        return self.grid.n_points // self.cell_points

    @property
    def diagonal(self) -> np.ndarray:
        if self.kinetic is not Kinetic.FD3:
            return np.diag(self.to_dense()).copy()
        return 2.0 * self.kinetic_prefactor + self.potential

    @property
    def off_diagonal(self) -> np.ndarray:
        if self.kinetic is not Kinetic.FD3:
            return np.diag(self.to_dense(), 1).copy()
        return np.full(self.dimension - 1, -self.kinetic_prefactor)

    def to_dense(self) -> np.ndarray:
        n = self.dimension
        if self.kinetic is Kinetic.FD3:
            t = self.kinetic_prefactor
            H = np.diag(2.0 * t + self.potential)
            idx = np.arange(n - 1)
            H[idx, idx + 1] = -t
            H[idx + 1, idx] = -t
            if self.grid.periodic:
                H[0, n - 1] -= t
                H[n - 1, 0] -= t
        elif self.grid.periodic:
            H = _fourier_dvr_kinetic(n, self.grid.length, self.hbar2_2m)
            H[np.diag_indices(n)] += self.potential
        else:
            H = _sine_dvr_kinetic(n, self.grid.length, self.hbar2_2m)
            H[np.diag_indices(n)] += self.potential
        return H

    def bloch_cell(self, s: int) -> np.ndarray:
        """Hermitian cell Hamiltonian for crystal momentum 2 pi s / L.

        Acts on the wave function values in cell 0; the value in cell ``l`` is
        ``exp(i kappa a l)`` times the value in cell 0.
        """
        P, Nc = self.cell_points, self.n_cells
        if P is None:
            raise ConfigError("Hamiltonian has no lattice period")
        V = self.potential[:P]
        if self.kinetic is Kinetic.FD3:
            t = self.kinetic_prefactor
            H = np.diag((2.0 * t + V).astype(complex))
            if P > 1:
                idx = np.arange(P - 1)
                H[idx, idx + 1] = -t
                H[idx + 1, idx] = -t
            phase = np.exp(2j * np.pi * s / Nc)
            H[P - 1, 0] += -t * phase
            H[0, P - 1] += -t * np.conj(phase)
            return H
        n = self.dimension
        g = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        g = np.sort(g[(g - s) % Nc == 0])
        k = 2.0 * np.pi * g / self.grid.length
        xc = self.grid.points[:P]
        B = np.exp(1j * np.outer(xc, k)) / math.sqrt(P)
        H = (B * (self.hbar2_2m * k**2)) @ B.conj().T
        H = 0.5 * (H + H.conj().T)
        H[np.diag_indices(P)] += V
        return H

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        if self.kinetic is Kinetic.FD3:
            t = self.kinetic_prefactor
            out = (2.0 * t + self.potential) * psi
            if self.grid.periodic:
                out -= t * (np.roll(psi, 1, axis=0) + np.roll(psi, -1, axis=0))
            else:
                out[1:] -= t * psi[:-1]
                out[:-1] -= t * psi[1:]
            return out
        return self.to_dense() @ psi


def build_hamiltonian(grid: Grid, potential, mass: float, kinetic="fd3",
                      cell_points: Optional[int] = None) -> Hamiltonian:
    """Assemble kinetic + potential energy on ``grid``.

    ``potential`` is either an array of samples (meV) or a potential spec; with a
    spec, the lattice period is detected automatically for periodic grids.
    """
    if not (mass > 0) or not math.isfinite(mass):
        raise DomainError(f"mass must be positive, got {mass!r}")
    kinetic = Kinetic(kinetic)
    if not isinstance(potential, np.ndarray):
        spec = potential
        potential = eval_potential(spec, grid, mass)
        if cell_points is None:
            cell_points = lattice_cell_points(spec, grid)
    V = np.asarray(potential, dtype=float)
    if V.shape != (grid.n_points,):
        raise ConfigError(f"potential has shape {V.shape}, grid has {grid.n_points} points")
    if cell_points is not None:
        if not grid.periodic or grid.n_points % cell_points:
            raise ConfigError(f"cell of {cell_points} points does not tile the periodic grid")
        tiled = np.tile(V[:cell_points], grid.n_points // cell_points)
        if np.max(np.abs(tiled - V)) > 1e-9 * max(1.0, np.max(np.abs(V))):
            raise ConfigError("potential is not periodic with the requested cell")
    V = V.copy()
    V.setflags(write=False)
    return Hamiltonian(grid, float(mass), V, kinetic, cell_points)
