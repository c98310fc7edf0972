"""
Intermediate scattering function from stochastic thermal wave packets.

Per sample, the overlap of the kicked-then-evolved and evolved-then-kicked
packets expands into a double sum over the kick-matrix entries,

    I_theta(q, t) = sum_{m,n} conj(a_m) M_mn c_n exp(i (E_m - E_n) t / hbar),
    a = M c,

and the thermal trace into the same form with weights |M_mn|^2 w_n^2.  Both
are evaluated by :func:`twpisf.kernels.spectral_sum`.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence
import csv
import json
import math
import multiprocessing

import numpy as np

from .dynamics import KickMatrix, kick_matrix
from .ensemble import ThermalWavePacket, sample_packet
from .errors import ConfigError, NumericError, TraceIOError
from .kernels import spectral_sum
from .spectrum import Spectrum, ThermalWeights
from .units import HBAR

CSV_HEADER = ["t_ps", "re_I", "im_I", "abs_I", "neg_ln_abs_I", "arg_I", "std_err"]
DROP_TOL = 1e-13


@dataclass(frozen=True)
class TimeGrid:
    """Uniform times t_j = j dt, j = 0 .. n_times - 1, ending at t_max (ps)."""

    t_max: float
    n_times: int

    def __post_init__(self):
        if self.n_times < 1 or int(self.n_times) != self.n_times:
            raise ConfigError(f"n_times must be a positive integer, got {self.n_times!r}")
        if self.n_times == 1 and self.t_max != 0:
            raise ConfigError("a single-point time grid must have t_max = 0")
        if self.n_times > 1 and not self.t_max > 0:
            raise ConfigError(f"t_max must be positive, got {self.t_max!r}")

    @property
    def dt(self) -> float:
        return self.t_max / (self.n_times - 1) if self.n_times > 1 else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_times) * self.dt


def make_time_grid(t_max: float, n_times: int) -> TimeGrid:
    if n_times < 2:
        raise ConfigError(f"n_times must be >= 2, got {n_times}")
    return TimeGrid(float(t_max), int(n_times))


def check_time_step(time_grid: TimeGrid, weights: ThermalWeights) -> None:
    """Require dt < pi hbar / (E_max - E_0) so the phase of I can be unwrapped."""
    span = float(weights.energies[-1] - weights.energies[0])
    if span <= 0 or time_grid.n_times < 2:
        return
    limit = math.pi * HBAR / span
    if time_grid.dt >= limit:
        raise ConfigError(
            f"time step {time_grid.dt:.4g} ps too coarse for the retained spectrum "
            f"(needs < {limit:.4g} ps, i.e. n_times > {int(time_grid.t_max / limit) + 1})")


@dataclass(frozen=True, eq=False)
class IsfTrace:
    q_requested: float
    q_used: float
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    std_err: Optional[np.ndarray] = field(default=None, repr=False)
    n_samples: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def neg_ln_abs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -np.log(np.abs(self.values))

    @property
    def phase(self) -> np.ndarray:
        """Unwrapped arg I along the time axis."""
        return np.unwrap(np.angle(self.values))

    def with_metadata(self, **kw) -> "IsfTrace":
        return replace(self, metadata={**self.metadata, **kw})


# --- evaluation -------------------------------------------------------------

def _prune(freq: np.ndarray, weight: np.ndarray, drop_tol: float):
    """Drop the smallest pairs whose summed modulus stays below ``drop_tol``.

    The dropped pairs change any S_j by at most ``drop_tol``.
    """
    mag = np.abs(weight)
    if drop_tol <= 0:
        keep = mag > 0
    else:
        order = np.argsort(mag, kind="stable")
        cut = int(np.searchsorted(np.cumsum(mag[order]), drop_tol, side="right"))
        keep = np.ones(mag.size, dtype=bool)
        keep[order[:cut]] = False
    return freq[keep], weight[keep]


def isf_sample(twp: ThermalWavePacket, km: KickMatrix, time_grid: TimeGrid,
               backend=None, drop_tol: float = DROP_TOL) -> np.ndarray:
    """I_theta(q, t_j) of one stochastic packet."""
    c = twp.coefficients
    if c.size != km.shape[1]:
        raise ConfigError(f"packet has {c.size} coefficients, kick matrix {km.shape[1]} columns")
    a = km.apply(c)
    w = np.conj(a[km.rows]) * km.values * c[km.cols]
    freq, w = _prune(km.frequencies, w, drop_tol)
    return spectral_sum(freq, w, time_grid.dt, time_grid.n_times, backend)


def isf_exact_trace(weights: ThermalWeights, spectrum: Spectrum, km: KickMatrix,
                    time_grid: TimeGrid, backend=None, drop_tol: float = DROP_TOL) -> IsfTrace:
    """Thermal trace over the retained states, no sampling."""
    if km.shape[1] != weights.count:
        raise ConfigError("kick matrix and thermal weights disagree on the retained basis")
    w = np.abs(km.values) ** 2 * weights.populations[km.cols]
    freq, w = _prune(km.frequencies, w.astype(complex), drop_tol)
    values = spectral_sum(freq, w, time_grid.dt, time_grid.n_times, backend)
    return IsfTrace(km.q_requested, km.q, time_grid.times, values, None, 0,
                    {"kind": "exact", "unitarity_defect": km.unitarity_defect})


# workers inherit this through fork; it is never mutated after the pool starts
_SHARED = {}


def _run_chunk(indices: Sequence[int]):
    s = _SHARED
    return [isf_sample(sample_packet(s["weights"], s["seed"], i), s["km"], s["time_grid"],
                       s["backend"]) for i in indices]


def isf_samples(weights: ThermalWeights, km: KickMatrix, time_grid: TimeGrid, n_samples: int,
                seed: int, workers: int = 1, backend=None) -> np.ndarray:
    """Per-sample traces, shape (n_samples, n_times), row i = sample index i.

    Samples are split statically into contiguous index ranges, so the rows do
    not depend on the number of workers.
    """
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    workers = max(1, min(int(workers), n_samples))
    chunks = [list(map(int, c)) for c in np.array_split(np.arange(n_samples), workers)]
    _SHARED.update(weights=weights, km=km, time_grid=time_grid, seed=seed, backend=backend)
    try:
        if workers == 1:
            rows = _run_chunk(chunks[0])
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(workers) as pool:
                rows = [r for part in pool.map(_run_chunk, chunks) for r in part]
    finally:
        _SHARED.clear()
    return np.array(rows)


def _neumaier(rows: np.ndarray) -> np.ndarray:
    total = np.zeros(rows.shape[1])
    comp = np.zeros(rows.shape[1])
    for x in rows:
        t = total + x
        comp += np.where(np.abs(total) >= np.abs(x), (total - t) + x, (x - t) + total)
        total = t
    return total + comp


def reduce_samples(samples: np.ndarray):
    """Mean and standard error over axis 0, summed in index order with compensation."""
    n = samples.shape[0]
    mean = (_neumaier(samples.real) + 1j * _neumaier(samples.imag)) / n
    if n < 2:
        return mean, np.full(samples.shape[1], np.nan)
    dev2 = np.abs(samples - mean) ** 2
    std_err = np.sqrt(_neumaier(dev2) / (n - 1)) / math.sqrt(n)
    return mean, std_err


def isf_ensemble(weights: ThermalWeights, spectrum: Spectrum, q: float, time_grid: TimeGrid,
                 n_samples: int, seed: int, km: Optional[KickMatrix] = None, workers: int = 1,
                 backend=None, **kick_kw) -> IsfTrace:
    """Ensemble average of :func:`isf_sample` with its standard error."""
    if km is None:
        km = kick_matrix(spectrum, weights, q, **kick_kw)
    samples = isf_samples(weights, km, time_grid, n_samples, seed, workers, backend)
    mean, err = reduce_samples(samples)
    return IsfTrace(km.q_requested, km.q, time_grid.times, mean, err, n_samples,
                    {"kind": "ensemble", "seed": int(seed), "unitarity_defect": km.unitarity_defect})


def msd_from_isf(trace: IsfTrace) -> np.ndarray:
    """Complex mean square displacement -(2 / q^2) Log I (Å^2), phase unwrapped in time."""
    mag = np.abs(trace.values)
    bad = np.flatnonzero(mag < 1e-12)
    if bad.size:
        raise NumericError(f"|I| below 1e-12 at time indices {bad[:10].tolist()}; "
                           "cannot unwind the logarithm")
    log_i = np.log(mag) + 1j * np.unwrap(np.angle(trace.values))
    return -2.0 / trace.q_used**2 * log_i


# --- files ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_trace_csv(path, trace: IsfTrace) -> Path:
    path = Path(path)
    vals = trace.values
    err = trace.std_err
    with path.open("w", newline="") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for i, (t, v, nl, ph) in enumerate(zip(trace.times, vals, trace.neg_ln_abs, trace.phase)):
            e = "" if err is None else _fmt(err[i])
            fh.write(",".join([_fmt(t), _fmt(v.real), _fmt(v.imag), _fmt(abs(v)),
                               _fmt(nl), _fmt(ph), e]) + "\n")
    return path


def _json_safe(x):
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_trace_json(path, trace: IsfTrace, extra: Optional[dict] = None) -> Path:
    """JSON mirror of a trace CSV carrying the same numbers plus run metadata."""
    path = Path(path)
    doc = {
        "q_requested": trace.q_requested,
        "q_used": trace.q_used,
        "n_samples": trace.n_samples,
        "metadata": {k: _json_safe(v) for k, v in trace.metadata.items()},
        "t_ps": [float(_fmt(t)) for t in trace.times],
        "re_I": [float(_fmt(v.real)) for v in trace.values],
        "im_I": [float(_fmt(v.imag)) for v in trace.values],
        "std_err": None if trace.std_err is None else [_json_safe(float(_fmt(e))) for e in trace.std_err],
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_trace_csv(path) -> IsfTrace:
    """Read a trace CSV; metadata comes from a ``.json`` sidecar when one exists."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise TraceIOError(f"cannot open trace {path}: {exc}") from exc
    times, values, errs = [], [], []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise TraceIOError(f"{path}: row 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise TraceIOError(f"{path}: row {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                times.append(float(row[0]))
                values.append(complex(float(row[1]), float(row[2])))
                errs.append(float(row[6]) if row[6] != "" else None)
            except ValueError as exc:
                raise TraceIOError(f"{path}: row {lineno}: {exc}") from exc
    if not times:
        raise TraceIOError(f"{path}: no data rows")
    has_err = any(e is not None for e in errs)
    std_err = np.array([np.nan if e is None else e for e in errs]) if has_err else None
    q_req = q_used = float("nan")
    n_samples = 0
    metadata = {"source": str(path)}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        try:
            doc = json.loads(sidecar.read_text())
            q_req, q_used = float(doc["q_requested"]), float(doc["q_used"])
            n_samples = int(doc.get("n_samples", 0))
            metadata.update(doc.get("metadata", {}))
        except (ValueError, KeyError, TypeError) as exc:
            raise TraceIOError(f"{sidecar}: malformed sidecar: {exc}") from exc
    return IsfTrace(q_req, q_used, np.array(times), np.array(values), std_err, n_samples, metadata)
