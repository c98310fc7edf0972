"""
Physical constants and the internal unit system.

Everything inside the package works in meV, Å, ps and atomic mass units (u).
In those units hbar ~ 0.66 meV ps and k_B ~ 0.086 meV/K, which keeps the
Hamiltonian entries of the systems studied here close to unity.

Constants are CODATA 2018 and are not configurable.
"""

from dataclasses import dataclass
import math

from .errors import DomainError, UnitError


@dataclass(frozen=True)
class PhysicalConstants:
    """SI values (CODATA 2018)."""

    h: float = 6.62607015e-34            # J s (exact)
    k_B: float = 1.380649e-23            # J/K
    amu: float = 1.66053906660e-27       # kg
    angstrom: float = 1e-10              # m
    ps: float = 1e-12                    # s
    meV: float = 1.602176634e-22         # J

    @property
    def hbar(self) -> float:
        """h / 2 pi, exact (the tabulated 1.054571817e-34 is this value truncated)."""
        return self.h / (2.0 * math.pi)


SI = PhysicalConstants()

# internal units: energy meV, length Å, time ps, mass u
HBAR = SI.hbar / (SI.meV * SI.ps)                      # meV ps
KB = SI.k_B / SI.meV                                   # meV / K
AMU = SI.amu * SI.angstrom**2 / (SI.meV * SI.ps**2)    # meV ps^2 / Å^2
HBAR2_OVER_AMU = HBAR**2 / AMU                         # meV Å^2 (hbar^2 / 1 u)


# unit name -> (dimension, SI factor)
_UNITS = {
    "J": ("energy", 1.0),
    "eV": ("energy", 1.602176634e-19),
    "meV": ("energy", SI.meV),
    "m": ("length", 1.0),
    "nm": ("length", 1e-9),
    "A": ("length", SI.angstrom),
    "Å": ("length", SI.angstrom),
    "s": ("time", 1.0),
    "ps": ("time", SI.ps),
    "fs": ("time", 1e-15),
    "kg": ("mass", 1.0),
    "u": ("mass", SI.amu),
    "1/m": ("wavenumber", 1.0),
    "1/A": ("wavenumber", 1.0 / SI.angstrom),
    "1/Å": ("wavenumber", 1.0 / SI.angstrom),
    "rad/s": ("frequency", 1.0),
    "rad/ps": ("frequency", 1.0 / SI.ps),
    "K": ("temperature", 1.0),
}


def convert(value, from_unit: str, to_unit: str):
    """Convert ``value`` (scalar or array) between two units of equal dimension."""
    try:
        dim_a, fa = _UNITS[from_unit]
        dim_b, fb = _UNITS[to_unit]
    except KeyError as exc:
        raise UnitError(f"unknown unit {exc.args[0]!r}") from None
    if dim_a != dim_b:
        raise UnitError(f"cannot convert {dim_a} ({from_unit}) to {dim_b} ({to_unit})")
    if fa == fb:
        return value * 1.0
    return value * (fa / fb)


def _check_positive(**kwargs):
    for name, val in kwargs.items():
        if not (val > 0) or not math.isfinite(val):
            raise DomainError(f"{name} must be positive and finite, got {val!r}")


def thermal_wavelength(mass_u: float, temperature: float) -> float:
    """Thermal de Broglie wavelength h / sqrt(2 pi m k_B T) in Å (mass in u, T in K)."""
    _check_positive(mass=mass_u, temperature=temperature)
    m = mass_u * SI.amu
    return SI.h / math.sqrt(2.0 * math.pi * m * SI.k_B * temperature) / SI.angstrom


def thermal_time(temperature: float) -> float:
    """hbar / (k_B T) in ps."""
    _check_positive(temperature=temperature)
    return SI.hbar / (SI.k_B * temperature) / SI.ps


@dataclass(frozen=True)
class ThermalUnits:
    """Natural length and time scales of a particle of given mass at temperature T."""

    lambda_th: float   # Å
    tau_th: float      # ps
    temperature: float
    mass: float        # u

    @classmethod
    def of(cls, mass_u: float, temperature: float) -> "ThermalUnits":
        return cls(thermal_wavelength(mass_u, temperature), thermal_time(temperature),
                   float(temperature), float(mass_u))
