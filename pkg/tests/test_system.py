import math

import numpy as np
import pytest

from twpisf.errors import ConfigError, DomainError, TraceIOError
from twpisf.system import (Boundary, Free, Harmonic, Kinetic, PeriodicCosine, Tabulated, build_grid,
                           build_hamiltonian, eval_potential, lattice_cell_points, load_tabulated)
from twpisf.units import AMU, HBAR, HBAR2_OVER_AMU, thermal_wavelength


def test_box_grid_spacing():
    L = 20 * thermal_wavelength(1.0, 300.0)
    g = build_grid("box", L, 800)
    assert g.spacing == pytest.approx(L / 801, rel=1e-15)
    assert g.points[0] == pytest.approx(g.spacing)
    assert g.points[-1] == pytest.approx(L - g.spacing)


def test_periodic_grid_examples():
    g = build_grid("periodic", 80 * 2.556, 4000)
    assert g.spacing == pytest.approx(2.556 / 50, rel=1e-14)
    g = build_grid(Boundary.PERIODIC, 10.0, 16)
    assert g.points[0] == 0.0
    assert g.points[15] == pytest.approx(9.375, rel=1e-15)


@pytest.mark.parametrize("n", [0, 5, 15, 15.5])
def test_grid_too_small(n):
    with pytest.raises(ConfigError):
        build_grid("box", 1.0, n)


def test_grid_bad_length():
    with pytest.raises(ConfigError):
        build_grid("box", -1.0, 100)


def test_potentials():
    g = build_grid("periodic", 10 * 2.556, 500)
    assert np.all(eval_potential(Free(), g) == 0)
    cos = PeriodicCosine(33.5, 2.556)
    V = eval_potential(cos, g)
    assert V[25] == pytest.approx(33.5, rel=1e-12)    # x = a/2
    assert V[0] == 0.0 and V.min() >= 0.0
    gb = build_grid("box", 20.0, 399)                   # odd count: centre is a grid point
    V = eval_potential(Harmonic(2.0), gb, mass=2.0)
    assert np.allclose(V, V[::-1], rtol=1e-12, atol=0)
    assert V[199] == pytest.approx(0.0, abs=1e-12)
    d = 3 * gb.spacing
    assert V[199 + 3] == pytest.approx(0.5 * 2.0 * AMU * 4.0 * d**2, rel=1e-10)


def test_potential_errors():
    g = build_grid("periodic", 10.0, 100)
    with pytest.raises(ConfigError):
        eval_potential(PeriodicCosine(1.0, 3.0), g)
    with pytest.raises(ConfigError):
        PeriodicCosine(-1.0, 1.0)
    with pytest.raises(DomainError):
        eval_potential(Harmonic(1.0), g)
    with pytest.raises(ConfigError):
        eval_potential(Tabulated(np.zeros(5)), g)


def test_hamiltonian_symmetric_structures():
    for boundary in ("box", "periodic"):
        g = build_grid(boundary, 10.0, 50)
        for kin in ("fd3", "dvr"):
            H = build_hamiltonian(g, np.linspace(0, 1, 50), 2.0, kin)
            D = H.to_dense()
            assert np.array_equal(D, D.T)
    H = build_hamiltonian(build_grid("box", 10.0, 50), Free(), 1.0)
    assert H.structure == "tridiagonal"
    Hp = build_hamiltonian(build_grid("periodic", 10.0, 50), Free(), 1.0)
    assert Hp.structure == "tridiagonal+corners"
    D = Hp.to_dense()
    assert D[0, -1] == D[-1, 0] == -Hp.kinetic_prefactor > -np.inf
    assert Hp.kinetic_prefactor == pytest.approx(HBAR2_OVER_AMU / (2 * 0.2**2))


def test_mass_error():
    with pytest.raises(DomainError):
        build_hamiltonian(build_grid("box", 10.0, 50), Free(), 0.0)


def test_free_box_eigenvalues_fd3_converge():
    L, m = 10.0, 1.0
    exact = np.arange(1, 6) ** 2 * math.pi**2 * HBAR2_OVER_AMU / (2 * m * L**2)
    errs = []
    for n in (200, 400, 800):
        E = np.linalg.eigvalsh(build_hamiltonian(build_grid("box", L, n), Free(), m).to_dense())[:5]
        errs.append(np.abs(E - exact))
    assert np.all(errs[2] < errs[1]) and np.all(errs[1] < errs[0])
    assert np.allclose(errs[2] / exact, 0, atol=1e-4)


def test_free_box_eigenvalues_dvr_exact():
    L, m, n = 10.0, 1.0, 64
    exact = np.arange(1, n + 1) ** 2 * math.pi**2 * HBAR2_OVER_AMU / (2 * m * L**2)
    E = np.linalg.eigvalsh(build_hamiltonian(build_grid("box", L, n), Free(), m, "dvr").to_dense())
    assert np.allclose(E, exact, rtol=1e-11)


def test_harmonic_gaps_and_refinement_ratio():
    m, hw = 10.0, 5.0
    spec = Harmonic(hw / HBAR)
    errs = []
    for n in (100, 200, 400, 800):
        H = build_hamiltonian(build_grid("box", 8.0, n - 1), spec, m)
        E = np.linalg.eigvalsh(H.to_dense())[:10]
        errs.append(np.abs(E - hw * (np.arange(10) + 0.5)))
    assert np.diff(E) == pytest.approx(np.full(9, hw), rel=2e-3)
    ratios = errs[-2] / errs[-1]
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_cosine_zero_amplitude_is_free():
    g = build_grid("periodic", 5 * 2.0, 100)
    a = build_hamiltonian(g, PeriodicCosine(0.0, 2.0), 3.0).to_dense()
    b = build_hamiltonian(g, Free(), 3.0).to_dense()
    assert np.array_equal(a, b)


def test_periodic_free_degenerate_pairs():
    H = build_hamiltonian(build_grid("periodic", 20.0, 64), Free(), 1.0)
    E = np.linalg.eigvalsh(H.to_dense())
    tol = 1e-8 * H.kinetic_prefactor
    assert E[0] == pytest.approx(0.0, abs=tol)
    pairs = E[1:-1].reshape(-1, 2)          # n even: the top level is single
    assert np.all(np.abs(pairs[:, 0] - pairs[:, 1]) <= tol)


@pytest.mark.parametrize("kinetic", ["fd3", "dvr"])
def test_bloch_cells_reproduce_dense_spectrum(kinetic):
    g = build_grid("periodic", 6 * 2.0, 48)
    H = build_hamiltonian(g, PeriodicCosine(10.0, 2.0), 5.0, kinetic)
    assert H.cell_points == 8 and H.n_cells == 6
    dense = np.linalg.eigvalsh(H.to_dense())
    cells = np.sort(np.concatenate([np.linalg.eigvalsh(H.bloch_cell(s)) for s in range(6)]))
    assert np.allclose(cells, dense, atol=1e-10 * np.abs(dense).max())


def test_lattice_detection():
    g = build_grid("periodic", 4 * 2.5, 40)
    assert lattice_cell_points(PeriodicCosine(1.0, 2.5), g) == 10
    assert lattice_cell_points(Free(), g) == 1
    assert lattice_cell_points(Free(), build_grid("box", 10.0, 40)) is None
    with pytest.raises(ConfigError):
        build_hamiltonian(g, np.arange(40.0), 1.0, cell_points=10)


def test_matvec_matches_dense():
    rng = np.random.default_rng(0)
    for boundary in ("box", "periodic"):
        H = build_hamiltonian(build_grid(boundary, 7.0, 30), rng.random(30), 1.5)
        v = rng.normal(size=30)
        assert np.allclose(H.matvec(v), H.to_dense() @ v, rtol=1e-13, atol=1e-12)


def test_load_tabulated(tmp_path):
    g = build_grid("box", 10.0, 20)
    p = tmp_path / "v.txt"
    np.savetxt(p, np.column_stack([g.points, g.points**2]))
    tab = load_tabulated(p, g)
    assert np.allclose(eval_potential(tab, g), g.points**2)
    np.savetxt(p, np.column_stack([g.points + 1e-6, g.points]))
    with pytest.raises(ConfigError):
        load_tabulated(p, g)
    with pytest.raises(TraceIOError):
        load_tabulated(tmp_path / "missing.txt", g)
