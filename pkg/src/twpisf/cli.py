"""
Command line interface: ``twpisf simulate|oracle|fit|dsf|compare``.

Exit codes: 0 success, 1 compare failed, 2 configuration error, 3 numeric
error, 4 I/O error.
"""

import argparse
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (ballistic_isf, dsf, fit_isf_model, model_trace, write_dsf_csv)
from .config import PRESETS, RunConfig, load_config, preset_text
from .dynamics import KickMatrix, SnapWarning, SpillWarning, kick_matrix
from .errors import ConfigError, TraceIOError, TwpIsfError, UsageError
from .isf import (IsfTrace, TimeGrid, check_time_step, isf_ensemble, isf_exact_trace,
                  make_time_grid, read_trace_csv, write_trace_csv, write_trace_json)
from .spectrum import Spectrum, ThermalWeights, diagonalize, thermal_weights
from .system import Free, Hamiltonian, Harmonic, PeriodicCosine, build_grid, build_hamiltonian, load_tabulated
from .units import HBAR, thermal_time

log = logging.getLogger("twpisf")


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# --- pipeline ---------------------------------------------------------------

@dataclass
class Setup:
    config: RunConfig
    hamiltonian: Hamiltonian
    spectrum: Spectrum
    weights: ThermalWeights
    time_grid: TimeGrid
    kick: KickMatrix


def build_setup(cfg: RunConfig) -> Setup:
    """Grid, Hamiltonian, spectrum, thermal weights, time grid and kick matrix for ``cfg``."""
    grid = build_grid(cfg["grid.boundary"], cfg.length_A, cfg.n_points)
    kind = cfg["potential.kind"]
    if kind == "free":
        pot = Free()
    elif kind == "harmonic":
        pot = Harmonic(cfg["potential.hbar_omega_meV"] / HBAR)
    elif kind == "cosine":
        pot = PeriodicCosine(cfg["potential.amplitude_meV"], cfg["potential.cell_A"] or cfg["grid.cell_A"])
    else:
        pot = load_tabulated(cfg["potential.file"], grid)
    H = build_hamiltonian(grid, pot, cfg.mass_u, cfg["numerics.kinetic"])
    t0 = time.perf_counter()
    spec = diagonalize(H)
    log.info("diagonalized %d states in %.2f s", spec.size, time.perf_counter() - t0)
    weights = thermal_weights(spec, cfg.temperature, cfg["numerics.weight_threshold"])
    tg = make_time_grid(cfg.t_max_ps, cfg["time.n_times"])
    check_time_step(tg, weights)
    km = kick_matrix(spec, weights, cfg["scattering.q_invA"], cfg["numerics.working_basis"],
                     cfg["numerics.spill_tolerance"], cfg["scattering.strict_commensurate"])
    log.info("retained %d states, kick matrix %dx%d with %d entries",
             weights.count, km.shape[0], km.shape[1], km.nnz)
    return Setup(cfg, H, spec, weights, tg, km)


def _backend(cfg: RunConfig) -> Optional[str]:
    b = cfg["numerics.backend"]
    return None if b == "auto" else b


def _write(out: Path, stem: str, trace: IsfTrace, cfg: Optional[RunConfig], formats, extra=None):
    written = [write_trace_csv(out / f"{stem}.csv", trace)]
    if "json" in formats:
        doc = dict(extra or {})
        if cfg is not None:
            doc["config_digest"] = cfg.digest
        written.append(write_trace_json(out / f"{stem}.json", trace, doc))
    return written


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise TraceIOError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_simulate(cfg: RunConfig, out_dir=None, workers: int = 1) -> dict:
    """Run the ensemble and the exact trace; returns the manifest written next to them."""
    t_start = time.perf_counter()
    out = _out_dir(out_dir or cfg["output.directory"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SnapWarning)
        warnings.simplefilter("always", SpillWarning)
        setup = build_setup(cfg)
        backend = _backend(cfg)
        exact = isf_exact_trace(setup.weights, setup.spectrum, setup.kick, setup.time_grid, backend)
        ens = isf_ensemble(setup.weights, setup.spectrum, cfg["scattering.q_invA"], setup.time_grid,
                           cfg.n_samples, cfg.seed, km=setup.kick, workers=workers, backend=backend)
    for w in caught:
        log.warning("%s", w.message)
    digest = cfg.digest
    exact = exact.with_metadata(config_digest=digest)
    ens = ens.with_metadata(config_digest=digest)
    files = _write(out, "isf_ensemble", ens, cfg, cfg.formats)
    files += _write(out, "isf_exact", exact, cfg, cfg.formats)
    km = setup.kick
    manifest = {
        "config_digest": digest,
        "config": cfg.canonical_text(),
        "seed": cfg.seed,
        "n_samples": cfg.n_samples,
        "workers": workers,
        "q_requested": km.q_requested,
        "q_used": km.q,
        "retained_states": setup.weights.count,
        "working_states": km.shape[0],
        "kick_entries": km.nnz,
        "spill": {"unitarity_defect": km.unitarity_defect,
                  "spill_tolerance": cfg["numerics.spill_tolerance"]},
        "warnings": [str(w.message) for w in caught],
        "files": [p.name for p in files],
        "version": __version__,
        "wall_time_s": round(time.perf_counter() - t_start, 3),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def cmd_oracle(mass_u: float, temperature: float, q: float, t_max: float, n_times: int,
               out_dir, formats=("csv", "json")) -> Path:
    out = _out_dir(out_dir)
    tg = TimeGrid(float(t_max), int(n_times))
    trace = ballistic_isf(mass_u, temperature, q, tg)
    _write(out, "isf_oracle", trace, None, formats)
    return out / "isf_oracle.csv"


def cmd_fit(trace_file, t_fit_max: Optional[float], out_dir):
    trace = read_trace_csv(trace_file)
    t_fit_max = float(trace.times[-1]) if t_fit_max is None else t_fit_max
    result = fit_isf_model(trace, t_fit_max)
    out = _out_dir(out_dir)
    (out / "fit.txt").write_text(result.to_text())
    if result.degenerate and not np.isfinite(result.params.A1):
        model = IsfTrace(trace.q_requested, trace.q_used, trace.times,
                         np.ones(trace.times.size, dtype=complex), None, 0, {"kind": "model"})
    else:
        model = model_trace(result.params, trace.times, trace.q_used)
    write_trace_csv(out / "fit_model.csv", model)
    return result


def cmd_dsf(trace_file, window: str, out_dir) -> Path:
    trace = read_trace_csv(trace_file)
    out = _out_dir(out_dir)
    return write_dsf_csv(out / "dsf.csv", dsf(trace, window))


@dataclass
class CompareReport:
    max_dev: float
    rms_dev: float
    n_points: int
    fraction_within: Optional[float]
    passed: bool

    def to_text(self) -> str:
        lines = [f"max_abs_dev {self.max_dev:.6g}", f"rms_abs_dev {self.rms_dev:.6g}",
                 f"n_points {self.n_points}"]
        if self.fraction_within is not None:
            lines.append(f"fraction_within_sigma {self.fraction_within:.4f}")
        lines.append(f"result {'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def compare_traces(a: IsfTrace, b: IsfTrace, tol: Optional[float] = None, sigma: float = 5.0,
                   min_fraction: float = 0.95, force: bool = False) -> CompareReport:
    """Deviation of complex I between two traces on the same time grid.

    With ``tol`` the test is max |I_a - I_b| <= tol.  Otherwise, when either
    trace carries standard errors, at least ``min_fraction`` of the points must
    lie within ``sigma`` combined standard errors; without errors the default
    tolerance is 1e-8.
    """
    if a.times.size != b.times.size or np.max(np.abs(a.times - b.times)) > 1e-9 * max(1.0, a.times[-1]):
        raise UsageError("traces are on different time grids")
    qa, qb = a.q_used, b.q_used
    if not force and not (np.isnan(qa) and np.isnan(qb)) and not abs(qa - qb) <= 1e-9 * max(1.0, abs(qa)):
        raise UsageError(f"q_used differs ({qa} vs {qb}); pass --force to compare anyway")
    dev = np.abs(a.values - b.values)
    max_dev, rms = float(np.max(dev)), float(np.sqrt(np.mean(dev**2)))
    errs = [e for e in (a.std_err, b.std_err) if e is not None]
    frac = None
    if tol is not None:
        passed = max_dev <= tol
    elif errs:
        comb = np.sqrt(sum(np.nan_to_num(e) ** 2 for e in errs))
        frac = float(np.mean(dev <= sigma * comb + 1e-15))
        passed = frac >= min_fraction
    else:
        passed = max_dev <= 1e-8
    return CompareReport(max_dev, rms, int(dev.size), frac, passed)


# --- argument handling ------------------------------------------------------

def _load(args) -> RunConfig:
    if args.config and args.preset:
        raise UsageError("give --config or --preset, not both")
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise TraceIOError(f"cannot read config {args.config}: {exc}") from exc
    else:
        text = preset_text(args.preset or "ballistic")
    extra = {}
    if args.seed is not None:
        extra["ensemble.seed"] = str(args.seed)
    if args.strict_q:
        extra["scattering.strict_commensurate"] = "true"
    return load_config(text, extra=extra)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twpisf", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="ensemble ISF and exact thermal trace")
    s.add_argument("--config", help="config file (flat 'section.key = value' lines)")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int, default=default_workers())
    s.add_argument("--out", help="output directory (default: output.directory)")
    s.add_argument("--strict-q", action="store_true", help="reject q not commensurate with the grid")

    o = sub.add_parser("oracle", help="analytic ballistic ISF")
    o.add_argument("--mass", type=float, default=1.0, help="u")
    o.add_argument("--temperature", type=float, default=300.0, help="K")
    o.add_argument("--q", type=float, default=1.0, help="1/A")
    o.add_argument("--t-max", type=float, help="ps (default 5 thermal times)")
    o.add_argument("--n-times", type=int, default=101)
    o.add_argument("--out", default="out")

    f = sub.add_parser("fit", help="fit the smooth ISF model to a trace")
    f.add_argument("trace")
    f.add_argument("--t-fit-max", type=float, help="ps (default: end of trace)")
    f.add_argument("--out", default="out")

    d = sub.add_parser("dsf", help="dynamical structure factor of a trace")
    d.add_argument("trace")
    d.add_argument("--window", choices=["hann", "none"], default="hann")
    d.add_argument("--out", default="out")

    c = sub.add_parser("compare", help="deviation between two traces")
    c.add_argument("trace_a")
    c.add_argument("trace_b")
    c.add_argument("--tol", type=float, help="absolute tolerance on max |I_a - I_b|")
    c.add_argument("--sigma", type=float, default=5.0)
    c.add_argument("--force", action="store_true", help="compare even if q_used differs")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            cfg = _load(args)
            if args.workers < 1:
                raise UsageError("--workers must be >= 1")
            m = cmd_simulate(cfg, args.out, args.workers)
            print(f"q_used {m['q_used']:.10g}  samples {m['n_samples']}  "
                  f"digest {m['config_digest'][:12]}  wall {m['wall_time_s']:.2f} s")
        elif args.command == "oracle":
            t_max = args.t_max if args.t_max is not None else 5.0 * thermal_time(args.temperature)
            if args.n_times == 1:
                t_max = 0.0
            print(cmd_oracle(args.mass, args.temperature, args.q, t_max, args.n_times, args.out))
        elif args.command == "fit":
            sys.stdout.write(cmd_fit(args.trace, args.t_fit_max, args.out).to_text())
        elif args.command == "dsf":
            print(cmd_dsf(args.trace, args.window, args.out))
        elif args.command == "compare":
            report = compare_traces(read_trace_csv(args.trace_a), read_trace_csv(args.trace_b),
                                    args.tol, args.sigma, force=args.force)
            sys.stdout.write(report.to_text())
            return 0 if report.passed else 1
    except TwpIsfError as exc:
        for problem in getattr(exc, "problems", [str(exc)]):
            print(f"twpisf: error: {problem}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
