"""
Run configuration: flat ``section.key = value`` text, presets and overrides.

Every problem found in a config text is collected and reported together with
its line number.  Environment variables ``TWPISF_SECTION__KEY`` override single
keys after parsing.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional
import hashlib
import math
import os

from .errors import ConfigError
from .units import thermal_time, thermal_wavelength

ENV_PREFIX = "TWPISF_"


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _unit_interval(v):
    return None if 0 < v < 1 else "must lie in (0, 1)"


def _choice(*allowed):
    def check(v):
        return None if v in allowed else f"must be one of {', '.join(allowed)}"
    return check


def _formats(v):
    bad = [f for f in v.split(",") if f.strip() not in ("csv", "json")]
    return f"unknown format(s) {', '.join(bad)}" if bad else None


# key -> (type, default, check); default None means optional, REQUIRED means required
REQUIRED = object()
SCHEMA = {
    "system.mass_u": (float, REQUIRED, _positive),
    "system.temperature_K": (float, REQUIRED, _positive),
    "grid.boundary": (str, REQUIRED, _choice("box", "periodic")),
    "grid.length_A": (float, None, _positive),
    "grid.length_lambda_th": (float, None, _positive),
    "grid.cells": (int, None, _positive),
    "grid.cell_A": (float, None, _positive),
    "grid.points": (int, None, _positive),
    "grid.points_per_cell": (int, None, _positive),
    "potential.kind": (str, "free", _choice("free", "harmonic", "cosine", "tabulated")),
    "potential.hbar_omega_meV": (float, None, _positive),
    "potential.amplitude_meV": (float, None, _nonneg),
    "potential.cell_A": (float, None, _positive),
    "potential.file": (str, None, None),
    "scattering.q_invA": (float, 1.0, _positive),
    "scattering.strict_commensurate": (bool, False, None),
    "time.t_max_ps": (float, None, _positive),
    "time.t_max_tau_th": (float, None, _positive),
    "time.n_times": (int, REQUIRED, lambda v: None if v >= 2 else "must be >= 2"),
    "ensemble.n_samples": (int, 20, _positive),
    "ensemble.seed": (int, 42, _nonneg),
    "numerics.weight_threshold": (float, 1e-8, _unit_interval),
    "numerics.spill_tolerance": (float, 1e-6, _unit_interval),
    "numerics.kinetic": (str, "fd3", _choice("fd3", "dvr")),
    "numerics.working_basis": (str, "full", _choice("full", "auto")),
    "numerics.backend": (str, "auto", _choice("auto", "compiled", "numpy")),
    "output.directory": (str, "out", None),
    "output.formats": (str, "csv,json", _formats),
}

PRESETS = {
    "ballistic": """\
# free particle in a hard-wall box of 20 thermal wavelengths
system.mass_u = 1.0
system.temperature_K = 300
grid.boundary = box
grid.length_lambda_th = 20
grid.points = 800
potential.kind = free
scattering.q_invA = 1.0
time.t_max_tau_th = 5
time.n_times = 101
ensemble.n_samples = 60
ensemble.seed = 42
numerics.kinetic = dvr
""",
    "co-cu100": """\
# CO on a 1D cosine substitute of the Cu(100) corrugation, 80 cells
system.mass_u = 27.9949
system.temperature_K = 190
grid.boundary = periodic
grid.cells = 80
grid.cell_A = 2.556
grid.points_per_cell = 50
potential.kind = cosine
potential.amplitude_meV = 33.5
scattering.q_invA = 1.0
time.t_max_ps = 200
time.n_times = 40001
ensemble.n_samples = 20
ensemble.seed = 42
numerics.kinetic = dvr
""",
}


def _coerce(typ, raw: str):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return v
    return raw


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with derived lengths and times resolved."""

    values: Mapping[str, object]
    length_A: float
    n_points: int
    t_max_ps: float

    def __getitem__(self, key):
        return self.values[key]

    @property
    def mass_u(self) -> float:
        return self.values["system.mass_u"]

    @property
    def temperature(self) -> float:
        return self.values["system.temperature_K"]

    @property
    def seed(self) -> int:
        return self.values["ensemble.seed"]

    @property
    def n_samples(self) -> int:
        return self.values["ensemble.n_samples"]

    @property
    def formats(self):
        return [f.strip() for f in self.values["output.formats"].split(",")]

    def canonical_text(self) -> str:
        """Sorted ``key = value`` lines of every setting that affects results."""
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if key.startswith("output.") or v is None:
                continue
            if isinstance(v, bool):
                v = str(v).lower()
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key} = {v}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def replace(self, **updates) -> "RunConfig":
        """New config with ``section.key`` updates (pass keys as a dict via ``**``)."""
        vals = dict(self.values)
        vals.update(updates)
        return _resolve(vals, {k: 0 for k in vals})


def parse_config(text: str, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Parse and validate config text; ``overrides`` maps dotted keys to raw strings."""
    problems = []
    raw: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            problems.append(f"line {lineno}: duplicate key {key!r} (first on line {lines[key]})")
            continue
        raw[key], lines[key] = val, lineno
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            problems.append(f"override: unknown key {key!r}")
            continue
        raw[key], lines[key] = val, 0

    values: Dict[str, object] = {}
    for key, (typ, default, check) in SCHEMA.items():
        where = f"line {lines[key]}" if lines.get(key) else "override" if key in lines else "config"
        if key not in raw:
            if default is REQUIRED:
                problems.append(f"missing required key {key!r}")
            values[key] = None if default is REQUIRED else default
            continue
        try:
            v = _coerce(typ, raw[key])
        except ValueError as exc:
            problems.append(f"{where}: {key}: {exc}")
            values[key] = None
            continue
        msg = check(v) if check else None
        if msg:
            problems.append(f"{where}: {key} = {raw[key]} {msg}")
            v = None
        values[key] = v
    if problems:
        raise ConfigError("; ".join(problems), problems)
    return _resolve(values, lines)


def _resolve(values: Dict[str, object], lines: Mapping[str, int]) -> RunConfig:
    problems = []
    v = values
    lam = thermal_wavelength(v["system.mass_u"], v["system.temperature_K"])
    tau = thermal_time(v["system.temperature_K"])

    length_sources = [k for k in ("grid.length_A", "grid.length_lambda_th") if v[k] is not None]
    if v["grid.cells"] is not None or v["grid.cell_A"] is not None:
        if v["grid.cells"] is None or v["grid.cell_A"] is None:
            problems.append("grid.cells and grid.cell_A must be given together")
        else:
            length_sources.append("grid.cells")
    length = None
    if len(length_sources) != 1:
        problems.append("give exactly one of grid.length_A, grid.length_lambda_th, "
                        f"grid.cells x grid.cell_A (got {', '.join(length_sources) or 'none'})")
    elif length_sources[0] == "grid.length_A":
        length = v["grid.length_A"]
    elif length_sources[0] == "grid.length_lambda_th":
        length = v["grid.length_lambda_th"] * lam
    else:
        length = v["grid.cells"] * v["grid.cell_A"]

    n_points = None
    if v["grid.points"] is not None and v["grid.points_per_cell"] is not None:
        problems.append("give grid.points or grid.points_per_cell, not both")
    elif v["grid.points"] is not None:
        n_points = v["grid.points"]
    elif v["grid.points_per_cell"] is not None:
        if v["grid.cells"] is None:
            problems.append("grid.points_per_cell needs grid.cells")
        else:
            n_points = v["grid.cells"] * v["grid.points_per_cell"]
    else:
        problems.append("missing grid.points (or grid.points_per_cell)")

    if (v["time.t_max_ps"] is None) == (v["time.t_max_tau_th"] is None):
        problems.append("give exactly one of time.t_max_ps, time.t_max_tau_th")
        t_max = None
    else:
        t_max = v["time.t_max_ps"] if v["time.t_max_ps"] is not None else v["time.t_max_tau_th"] * tau

    kind = v["potential.kind"]
    if kind == "harmonic" and v["potential.hbar_omega_meV"] is None:
        problems.append("potential.kind = harmonic needs potential.hbar_omega_meV")
    if kind == "cosine":
        if v["potential.amplitude_meV"] is None:
            problems.append("potential.kind = cosine needs potential.amplitude_meV")
        if v["potential.cell_A"] is None and v["grid.cell_A"] is None:
            problems.append("potential.kind = cosine needs potential.cell_A or grid.cell_A")
        if v["grid.boundary"] != "periodic":
            problems.append("potential.kind = cosine needs grid.boundary = periodic")
    if kind == "tabulated" and v["potential.file"] is None:
        problems.append("potential.kind = tabulated needs potential.file")
    if problems:
        raise ConfigError("; ".join(problems), problems)
    return RunConfig(dict(values), float(length), int(n_points), float(t_max))


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """Collect ``TWPISF_SECTION__KEY=value`` variables as dotted keys."""
    environ = os.environ if environ is None else environ
    by_lower = {k.lower(): k for k in SCHEMA}
    out = {}
    for name, val in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, _, key = name[len(ENV_PREFIX):].partition("__")
        dotted = f"{section}.{key}".lower()
        out[by_lower.get(dotted, dotted)] = val
    return out


def load_config(text: str, environ: Optional[Mapping[str, str]] = None,
                extra: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Parse ``text`` with environment overrides, then ``extra`` (e.g. CLI flags) on top."""
    overrides = env_overrides(environ)
    overrides.update(extra or {})
    return parse_config(text, overrides)


def preset_text(name: str) -> str:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(sorted(PRESETS))})") from None
