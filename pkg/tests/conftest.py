import numpy as np
import pytest

from twpisf.config import load_config, preset_text
from twpisf.cli import build_setup
from twpisf.dynamics import kick_matrix
from twpisf.spectrum import diagonalize, thermal_weights
from twpisf.system import Harmonic, PeriodicCosine, build_grid, build_hamiltonian
from twpisf.units import HBAR

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ballistic_setup():
    return build_setup(load_config(preset_text("ballistic")))


@pytest.fixture(scope="session")
def small_box():
    """Free particle, small fd3 box: fast, exercises the tridiagonal path."""
    grid = build_grid("box", 12.0, 120)
    H = build_hamiltonian(grid, np.zeros(120), 1.0)
    spec = diagonalize(H)
    w = thermal_weights(spec, 300.0)
    return spec, w, kick_matrix(spec, w, 1.0)


@pytest.fixture(scope="session")
def small_lattice():
    """Cosine lattice, 12 cells x 10 points, DVR kinetic, Bloch-reduced."""
    grid = build_grid("periodic", 12 * 2.556, 120)
    H = build_hamiltonian(grid, PeriodicCosine(33.5, 2.556), 27.9949, "dvr")
    spec = diagonalize(H)
    w = thermal_weights(spec, 190.0)
    return spec, w, kick_matrix(spec, w, 2 * np.pi * 4 / grid.length)


@pytest.fixture(scope="session")
def harmonic_box():
    grid = build_grid("box", 20.0, 400)
    H = build_hamiltonian(grid, Harmonic(1.8 / HBAR), 27.9949, "dvr")
    spec = diagonalize(H)
    return spec, thermal_weights(spec, 190.0)
