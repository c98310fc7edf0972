"""
Stochastic thermal wave packets.

A packet carries Boltzmann moduli and independent uniform random phases in
the eigenbasis.  Averaged over the phases, ``|psi><psi|`` is the canonical
density operator, whatever the time.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .spectrum import ThermalWeights
from .units import HBAR

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class PhaseDraw:
    seed: int
    sample_index: int
    phases: np.ndarray = field(repr=False)


def draw_phases(seed: int, sample_index: int, count: int) -> PhaseDraw:
    """Uniform phases in [0, 2 pi) keyed by ``(seed, sample_index)``.

    The stream for one key does not depend on ``count``: a longer draw extends
    a shorter one, so the phase of eigenstate n is the same whatever the size
    of the retained basis.
    """
    if count < 1:
        raise UsageError(f"phase count must be >= 1, got {count}")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(sample_index)])
    rng = np.random.Generator(np.random.PCG64(ss))
    theta = TWO_PI * rng.random(count)
    theta[theta >= TWO_PI] = 0.0
    theta.setflags(write=False)
    return PhaseDraw(int(seed), int(sample_index), theta)


@dataclass(frozen=True, eq=False)
class ThermalWavePacket:
    coefficients: np.ndarray = field(repr=False)
    weights: ThermalWeights = field(repr=False)
    phases: PhaseDraw = field(repr=False)

    @property
    def energies(self) -> np.ndarray:
        return self.weights.energies


def assemble_twp(weights: ThermalWeights, phases: PhaseDraw) -> ThermalWavePacket:
    if phases.phases.size != weights.count:
        raise UsageError(f"{phases.phases.size} phases for {weights.count} retained states")
    c = weights.amplitudes * np.exp(1j * phases.phases)
    c.setflags(write=False)
    return ThermalWavePacket(c, weights, phases)


def coefficients_at_time(twp: ThermalWavePacket, t: float) -> np.ndarray:
    """c_n(t) = c_n exp(-i E_n t / hbar), t in ps."""
    return twp.coefficients * np.exp(-1j * twp.energies * (t / HBAR))


def sample_packet(weights: ThermalWeights, seed: int, sample_index: int) -> ThermalWavePacket:
    return assemble_twp(weights, draw_phases(seed, sample_index, weights.count))
