"""
The scattering kick exp(i q x) and the kicked/evolved wave packets.

Time evolution is spectral: in the eigenbasis it is an exact phase factor per
state.  The kick couples the thermally retained states to a (possibly larger)
working basis; :class:`KickMatrix` holds those couplings and the norm lost by
truncating the working basis.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple
import math
import warnings

import numpy as np
from scipy import linalg, sparse

from .errors import ConfigError, NumericError
from .ensemble import ThermalWavePacket, coefficients_at_time
from .spectrum import Spectrum, ThermalWeights
from .system import Grid, Hamiltonian, Kinetic
from .units import HBAR

DEFAULT_SPILL_TOLERANCE = 1e-6


class SpillWarning(UserWarning):
    pass


class SnapWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GridState:
    amplitudes: np.ndarray = field(repr=False)
    grid: Grid

    def norm(self) -> float:
        return math.sqrt(self.grid.spacing * float(np.vdot(self.amplitudes, self.amplitudes).real))

    def overlap(self, other: "GridState") -> complex:
        return self.grid.spacing * complex(np.vdot(self.amplitudes, other.amplitudes))


def to_grid(coefficients, spectrum: Spectrum) -> GridState:
    c = np.asarray(coefficients)
    psi = spectrum.vectors[:, :c.size] @ c / math.sqrt(spectrum.grid.spacing)
    return GridState(psi, spectrum.grid)


def project(state: GridState, spectrum: Spectrum, count: Optional[int] = None,
            spill_tolerance: Optional[float] = None, strict: bool = False) -> Tuple[np.ndarray, float]:
    """Expansion coefficients on the lowest ``count`` eigenstates and the discarded norm^2."""
    count = spectrum.size if count is None else count
    d = math.sqrt(state.grid.spacing) * (spectrum.vectors[:, :count].conj().T @ state.amplitudes)
    discarded = max(state.norm() ** 2 - float(np.vdot(d, d).real), 0.0)
    if spill_tolerance is not None and discarded > spill_tolerance:
        msg = f"projection discards norm {discarded:.3e} > spill tolerance {spill_tolerance:.1e}"
        if strict:
            raise NumericError(msg)
        warnings.warn(msg, SpillWarning, stacklevel=2)
    return d, discarded


# --- wave-vector handling ---------------------------------------------------

@dataclass(frozen=True)
class SnapReport:
    q_requested: float
    q_used: float
    index: Optional[int]          # q_used L / 2 pi on periodic grids

    @property
    def relative_shift(self) -> float:
        return (self.q_used - self.q_requested) / self.q_requested if self.q_requested else 0.0


def snap_q(q: float, grid: Grid) -> Tuple[float, SnapReport]:
    """Nearest wave vector making exp(i q x) single valued on the periodic grid."""
    if not grid.periodic:
        raise ConfigError("snap_q applies to periodic grids only")
    k = int(round(q * grid.length / (2.0 * math.pi)))
    if k == 0:
        raise ConfigError(f"q = {q} 1/A rounds to zero on a periodic length of {grid.length} A")
    q_used = 2.0 * math.pi * k / grid.length
    return q_used, SnapReport(float(q), q_used, k)


def resolve_q(q: float, grid: Grid, strict: bool = False) -> SnapReport:
    """Check or snap ``q`` for ``grid``; box grids take any q."""
    if not grid.periodic:
        return SnapReport(float(q), float(q), None)
    q_used, report = snap_q(q, grid)
    if abs(q_used - q) > 1e-9 * max(1.0, abs(q)):
        if strict:
            raise ConfigError(f"q = {q} 1/A is not commensurate with periodic length "
                              f"{grid.length} A (nearest {q_used:.10g})")
        warnings.warn(f"q snapped from {q} to {q_used:.10g} 1/A", SnapWarning, stacklevel=2)
    return report


def kick(state: GridState, q: float, strict: bool = False) -> GridState:
    """Multiply by exp(i q x_j) point by point."""
    q_used = resolve_q(q, state.grid, strict).q_used
    return GridState(state.amplitudes * np.exp(1j * q_used * state.grid.points), state.grid)


# --- kick matrix ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KickMatrix:
    """<phi_m| exp(i q x) |phi_n> for m in the working basis, n in the retained basis.

    Stored as coordinate lists; entries known to vanish by symmetry are absent.
    """

    q: float
    q_requested: float
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    energies_working: np.ndarray = field(repr=False)
    energies_retained: np.ndarray = field(repr=False)
    unitarity_defect: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.energies_working.size, self.energies_retained.size

    @property
    def nnz(self) -> int:
        return self.values.size

    @cached_property
    def sparse(self) -> sparse.csr_matrix:
        return sparse.csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    @cached_property
    def matrix(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=complex)
        out[self.rows, self.cols] = self.values
        return out

    @cached_property
    def frequencies(self) -> np.ndarray:
        """(E_m - E_n) / hbar for every stored entry, rad/ps."""
        return (self.energies_working[self.rows] - self.energies_retained[self.cols]) / HBAR

    def apply(self, c: np.ndarray) -> np.ndarray:
        return self.sparse @ c

    def column_norms2(self) -> np.ndarray:
        return np.bincount(self.cols, weights=np.abs(self.values) ** 2, minlength=self.shape[1])


def _working_size_estimate(spectrum: Spectrum, weights: ThermalWeights, q: float) -> int:
    H = spectrum.hamiltonian
    vmin, vmax = float(H.potential.min()), float(H.potential.max())
    e_top = float(weights.energies[-1])
    k_max = math.sqrt(max(e_top - vmin, 0.0) / H.hbar2_2m)
    e_cut = vmax + H.hbar2_2m * (k_max + abs(q)) ** 2
    return max(int(np.searchsorted(spectrum.energies, e_cut, side="right")), weights.count)


def _dense_entries(spectrum: Spectrum, q: float, n_w: int, n_r: int):
    U = spectrum.vectors
    phase = np.exp(1j * q * spectrum.grid.points)
    M = U[:, :n_w].conj().T @ (phase[:, None] * U[:, :n_r])
    rows, cols = np.indices(M.shape)
    return rows.ravel(), cols.ravel(), M.ravel()


def _bloch_entries(spectrum: Spectrum, q: float, n_w: int, n_r: int):
    H, lab = spectrum.hamiltonian, spectrum.bloch
    P, Nc = H.cell_points, H.n_cells
    k = int(round(q * H.grid.length / (2.0 * math.pi)))
    phase = np.exp(1j * q * H.grid.points[:P])
    # global index of (s, b)
    where = np.empty((Nc, P), dtype=np.int64)
    where[lab.kappa_index, lab.band_index] = np.arange(spectrum.size)
    rows, cols, vals = [], [], []
    for s in range(Nc):
        n_idx = where[s]
        col_sel = n_idx < n_r
        if not col_sel.any():
            continue
        sp = (s + k) % Nc
        m_idx = where[sp]
        row_sel = m_idx < n_w
        Vn = lab.cell_vectors[s][:, col_sel]
        Vm = lab.cell_vectors[sp][:, row_sel]
        block = Vm.conj().T @ (phase[:, None] * Vn)
        r, c = np.meshgrid(m_idx[row_sel], n_idx[col_sel], indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(block.ravel())
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    order = np.lexsort((cols, rows))
    return rows[order], cols[order], vals[order]


def kick_matrix(spectrum: Spectrum, weights: ThermalWeights, q: float, working: str = "full",
                spill_tolerance: float = DEFAULT_SPILL_TOLERANCE, strict: bool = False) -> KickMatrix:
    """Kick couplings from the retained states into the working basis.

    ``working="full"`` uses every eigenstate (the kick is then exactly unitary);
    ``"auto"`` keeps states up to the energy a kick by q can reach from the
    retained set and grows the basis until the lost norm is below
    ``spill_tolerance``.
    """
    report = resolve_q(q, spectrum.grid, strict)
    q_used = report.q_used
    n_r = weights.count
    if working == "full":
        n_w = spectrum.size
    elif working == "auto":
        n_w = _working_size_estimate(spectrum, weights, q_used)
    else:
        raise ConfigError(f"unknown working basis mode {working!r}")
    entries = _bloch_entries if spectrum.bloch is not None else _dense_entries
    while True:
        rows, cols, vals = entries(spectrum, q_used, n_w, n_r)
        norms = np.bincount(cols, weights=np.abs(vals) ** 2, minlength=n_r)
        defect = float(np.max(np.abs(1.0 - norms)))
        if defect <= spill_tolerance or n_w >= spectrum.size:
            break
        n_w = min(2 * n_w, spectrum.size)
    if defect > spill_tolerance:
        raise NumericError(f"kick leaves the eigenbasis: norm defect {defect:.3e} exceeds "
                           f"spill tolerance {spill_tolerance:.1e}; refine the grid")
    for arr in (rows, cols, vals):
        arr.setflags(write=False)
    return KickMatrix(q_used, report.q_requested, rows, cols, vals,
                      spectrum.energies[:n_w].copy(), weights.energies.copy(), defect)


# --- kicked / evolved packets -----------------------------------------------

def chi_ke(twp: ThermalWavePacket, km: KickMatrix, t: float) -> np.ndarray:
    """Kicked at t = 0, then evolved to t (working-basis coefficients)."""
    return km.apply(twp.coefficients) * np.exp(-1j * km.energies_working * (t / HBAR))


def chi_ek(twp: ThermalWavePacket, km: KickMatrix, t: float) -> np.ndarray:
    """Evolved to t, then kicked."""
    return km.apply(coefficients_at_time(twp, t))


# --- independent propagation oracle -----------------------------------------

def crank_nicolson(H: Hamiltonian, dt: float):
    """Return a one-step Crank-Nicolson propagator for grid vectors (dt in ps).

    Used only to cross-check the spectral propagation.
    """
    a = 0.5j * dt / HBAR
    if H.kinetic is Kinetic.FD3 and not H.grid.periodic:
        n = H.dimension
        ab = np.zeros((3, n), dtype=complex)
        ab[0, 1:] = a * H.off_diagonal
        ab[1, :] = 1.0 + a * H.diagonal
        ab[2, :-1] = a * H.off_diagonal

        def step(psi):
            rhs = psi - a * H.matvec(psi)
            return linalg.solve_banded((1, 1), ab, rhs)
        return step
    Hd = H.to_dense()
    lu = linalg.lu_factor(np.eye(H.dimension) + a * Hd)

    def step(psi):
        return linalg.lu_solve(lu, psi - a * (Hd @ psi))
    return step
