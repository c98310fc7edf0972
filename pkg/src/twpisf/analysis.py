"""
Analytic ballistic ISF, the smooth ISF model and its least-squares fit, and the
dynamical structure factor.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional
import math

import numpy as np

from .errors import ConfigError, NumericError, TraceIOError
from .isf import IsfTrace, TimeGrid
from .units import thermal_time, thermal_wavelength

PARAM_NAMES = ("P1", "A1", "P2", "A2")


def ballistic_isf(mass_u: float, temperature: float, q: float, time_grid: TimeGrid) -> IsfTrace:
    """Exact ISF of a free particle: I = exp(-xi (t/tau)^2 + i xi t/tau), xi = (lambda q)^2 / 4 pi."""
    if not q > 0:
        raise ConfigError(f"q must be positive, got {q!r}")
    lam = thermal_wavelength(mass_u, temperature)
    tau = thermal_time(temperature)
    xi = (lam * q) ** 2 / (4.0 * math.pi)
    s = time_grid.times / tau
    values = np.exp(-xi * s**2 + 1j * xi * s)
    return IsfTrace(float(q), float(q), time_grid.times, values, None, 0,
                    {"kind": "ballistic", "lambda_th_A": lam, "tau_th_ps": tau})


# --- model ------------------------------------------------------------------

@dataclass(frozen=True)
class IsfModelParams:
    P1: float
    A1: float   # ps^-2
    P2: float
    A2: float   # ps^-1

    def as_array(self) -> np.ndarray:
        return np.array([self.P1, self.A1, self.P2, self.A2])

    @property
    def long_time_limit(self) -> float:
        return 1.0 - self.P1 - self.P2


def eval_isf_model(params: IsfModelParams, t):
    """1 + P1 (exp(-A1 t^2 + (P2 A2 / P1) t) - 1) + P2 (exp(-A2 t) - 1).

    The linear term in the first exponent cancels the slope of the second, so
    -ln I is quadratic at short times.
    """
    P1, A1, P2, A2 = params.P1, params.A1, params.P2, params.A2
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        gauss = np.exp(-A1 * t**2 + (P2 * A2 / P1) * t)
    return 1.0 + P1 * (gauss - 1.0) + P2 * (np.exp(-A2 * t) - 1.0)


def _model_and_jacobian(p: np.ndarray, t: np.ndarray):
    """ln I_mod and its derivatives with respect to (P1, A1, P2, A2)."""
    P1, A1, P2, A2 = p
    with np.errstate(over="ignore", invalid="ignore"):
        G = np.exp(-A1 * t**2 + (P2 * A2 / P1) * t)
        X = np.exp(-A2 * t)
        f = 1.0 + P1 * (G - 1.0) + P2 * (X - 1.0)
        J = np.empty((t.size, 4))
        J[:, 0] = G - 1.0 - G * P2 * A2 * t / P1
        J[:, 1] = -P1 * G * t**2
        J[:, 2] = G * A2 * t + X - 1.0
        J[:, 3] = P2 * t * (G - X)
        J /= f[:, None]
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        return None, None
    return np.log(f), J


def _to_natural(z: np.ndarray) -> np.ndarray:
    return np.array([_logistic(z[0]), math.exp(z[1]), _logistic(z[2]), math.exp(z[3])])


def _logistic(u: float) -> float:
    return 1.0 / (1.0 + math.exp(-u)) if u >= 0 else math.exp(u) / (1.0 + math.exp(u))


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass
class FitResult:
    params: IsfModelParams
    ci68: dict
    residual_rms: float
    n_points: int
    converged: bool
    iterations: int
    gradient_norm: float = float("nan")
    degenerate: bool = False
    objective_history: List[float] = field(default_factory=list, repr=False)

    def to_text(self) -> str:
        lines = [f"{name} {getattr(self.params, name):.12g} {self.ci68[name]:.6g}" for name in PARAM_NAMES]
        lines += [
            f"residual_rms {self.residual_rms:.6g}",
            f"n_points {self.n_points}",
            f"converged {str(self.converged).lower()}",
            f"iterations {self.iterations}",
            f"gradient_norm {self.gradient_norm:.3g}",
            f"degenerate {str(self.degenerate).lower()}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FitResult":
        vals, ci, diag = {}, {}, {}
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] in PARAM_NAMES:
                vals[parts[0]], ci[parts[0]] = float(parts[1]), float(parts[2])
            else:
                diag[parts[0]] = parts[1]
        return cls(IsfModelParams(**vals), ci, float(diag["residual_rms"]), int(diag["n_points"]),
                   diag["converged"] == "true", int(diag["iterations"]),
                   float(diag["gradient_norm"]), diag["degenerate"] == "true")


def _initial_guess(t: np.ndarray, log_i: np.ndarray) -> np.ndarray:
    """Deterministic starting point read off the data.

    Slopes of ln|I| over the middle and last thirds give A2 (their decay) and
    P2; the median level after the first maximum of -ln|I| gives P1; the
    time at which the fast part has lost half its weight gives A1.
    """
    T = t[-1]
    y = -log_i

    def slope(lo, hi):
        sel = (t >= lo) & (t <= hi)
        if sel.sum() < 2:
            return 0.0, float(np.mean(log_i[-2:]))
        b, a = np.polyfit(t[sel], log_i[sel], 1)
        return b, float(np.mean(log_i[sel]))

    b_mid, _ = slope(T / 3, 2 * T / 3)
    b_last, lvl_last = slope(2 * T / 3, T)
    ratio = b_last / b_mid if b_mid < 0 else 0.0
    A2 = -math.log(ratio) / (T / 3) if 0.0 < ratio < 1.0 else 1.0 / T
    A2 = min(max(A2, 1e-3 / T), 100.0 / T)
    t_c = 5 * T / 6
    P2 = -b_last * math.exp(lvl_last) * math.exp(min(A2 * t_c, 50.0)) / A2 if b_last < 0 else 0.01
    P2 = min(max(P2, 1e-4), 0.5)

    peaks = np.flatnonzero((y[1:-1] >= y[:-2]) & (y[1:-1] > y[2:])) + 1
    i_pk = int(peaks[0]) if peaks.size else max(2, t.size // 10)
    plateau = slice(i_pk, None)
    i_plat = float(np.median(np.exp(log_i[plateau])))
    tail = P2 * (1.0 - math.exp(-A2 * float(np.median(t[plateau]))))
    P1 = 1.0 - i_plat - tail
    P1 = min(max(P1, 0.01), 0.99 - P2)

    # fast part 1 - I - slow tail reaches P1/2 when exp(-A1 t^2) = 1/2
    fast = 1.0 - np.exp(log_i) - P2 * (1.0 - np.exp(-A2 * t))
    cross = np.flatnonzero(fast >= 0.5 * P1)
    if cross.size and cross[0] > 0:
        k = int(cross[0])
        t_h = t[k - 1] + (0.5 * P1 - fast[k - 1]) * (t[k] - t[k - 1]) / (fast[k] - fast[k - 1])
        A1 = math.log(2.0) / max(t_h, 1e-300) ** 2
    else:
        sel = (t > 0) & (t <= t[i_pk])
        c = float(np.sum(y[sel] * t[sel] ** 2) / np.sum(t[sel] ** 4)) if sel.any() else 0.0
        A1 = c / P1 if c > 0 else 1.0 / max(t[i_pk], t[1]) ** 2
    return np.array([P1, A1, P2, A2])


def fit_isf_model(trace: IsfTrace, t_fit_max: float, max_iter: int = 500, gtol: float = 1e-8,
                  xtol: float = 1e-10, initial: Optional[IsfModelParams] = None) -> FitResult:
    """Least-squares fit of ln I_mod to ln|I| on 0 <= t <= t_fit_max.

    Damped Gauss-Newton (Levenberg-Marquardt): a step is taken only if it lowers
    the objective; the damping is then multiplied by 0.3, otherwise by 10.
    P1, P2 are fitted through a logistic transform and A1, A2 through a log, so
    they stay in (0, 1) and (0, inf).  Convergence is declared when every
    gradient component, scaled by its Jacobian column and the residual norm, is
    below ``gtol``, or when an accepted step moves every transformed parameter
    by less than ``xtol`` (the exact-data case, where the residual is rounding
    noise and its gradient direction is meaningless).  ``ci68`` are one-sigma half widths from the Gauss-Newton
    covariance scaled by the residual variance.
    """
    t_all = np.asarray(trace.times, dtype=float)
    if t_all[-1] < t_fit_max * (1.0 - 1e-9):
        raise ConfigError(f"trace ends at {t_all[-1]:.6g} ps, before t_fit_max = {t_fit_max:.6g} ps")
    sel = t_all <= t_fit_max * (1.0 + 1e-12)
    t = t_all[sel]
    mag = np.abs(np.asarray(trace.values)[sel])
    if np.any(mag <= 0):
        raise NumericError("|I| vanishes inside the fit window")
    data = np.log(mag)
    n = t.size
    if n < 5:
        raise ConfigError(f"only {n} points in the fit window")

    if np.max(np.abs(data)) < 1e-12:
        nan = float("nan")
        return FitResult(IsfModelParams(0.0, nan, 0.0, nan), {k: nan for k in PARAM_NAMES},
                         0.0, n, False, 0, 0.0, True, [0.0])

    p0 = initial.as_array() if initial is not None else _initial_guess(t, data)
    z = np.array([_logit(p0[0]), math.log(p0[1]), _logit(p0[2]), math.log(p0[3])])

    def evaluate(z):
        if np.max(np.abs(z)) > 700:
            return None, None, None, math.inf
        p = _to_natural(z)
        model, Jn = _model_and_jacobian(p, t)
        if model is None:
            return None, None, None, math.inf
        r = model - data
        Jz = Jn * np.array([p[0] * (1 - p[0]), p[1], p[2] * (1 - p[2]), p[3]])
        return p, r, Jz, math.fsum(r * r)

    p, r, J, S = evaluate(z)
    if r is None:
        raise NumericError("initial model parameters give a non-positive model")
    def scaled_gradient(J, r, S):
        if S <= 0:
            return 0.0
        g = J.T @ r
        col = np.linalg.norm(J, axis=0)
        return float(np.max(np.abs(g) / np.maximum(col * math.sqrt(S), 1e-300)))

    lam = 1e-3
    history = [S]
    converged = False
    grad_scaled = scaled_gradient(J, r, S)
    small_step = False
    it = 0
    for it in range(1, max_iter + 1):
        if S < 1e-28 or grad_scaled <= gtol or small_step:
            converged = True
            break
        g = J.T @ r
        A = J.T @ J
        d = np.maximum(np.diag(A), 1e-12 * np.max(np.diag(A)))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new, r_new, J_new, S_new = evaluate(z + step)
            # near the minimum the decrease of S drops below its rounding error;
            # there a step is judged by the gradient instead
            ok = S_new < S
            if not ok and S_new <= S:
                g_new = scaled_gradient(J_new, r_new, S_new)
                ok = g_new < grad_scaled
            if ok:
                z, p, r, J, S = z + step, p_new, r_new, J_new, S_new
                grad_scaled = scaled_gradient(J, r, S)
                small_step = float(np.max(np.abs(step))) <= xtol
                lam = max(lam * 0.3, 1e-15)
                accepted = True
                history.append(S)
                break
            lam *= 10.0
        if not accepted:
            break
    else:
        it = max_iter
        converged = S < 1e-28 or grad_scaled <= gtol or small_step

    # covariance in the natural parameters
    _, Jn = _model_and_jacobian(p, t)
    dof = max(n - 4, 1)
    s2 = S / dof
    try:
        cov = s2 * np.linalg.inv(Jn.T @ Jn)
        ci = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        ci = np.full(4, np.inf)
    if not np.all(np.isfinite(ci)):
        converged = False
    params = IsfModelParams(*map(float, p))
    degenerate = bool(min(params.P1, params.P2) < 1e-6)
    return FitResult(params, dict(zip(PARAM_NAMES, map(float, ci))), math.sqrt(S / n), n,
                     converged, it, grad_scaled, degenerate, history)


def model_trace(params: IsfModelParams, times, q: float = float("nan")) -> IsfTrace:
    times = np.asarray(times, dtype=float)
    return IsfTrace(q, q, times, eval_isf_model(params, times).astype(complex), None, 0,
                    {"kind": "model"})


# --- dynamical structure factor ---------------------------------------------

@dataclass(frozen=True, eq=False)
class DsfTrace:
    q: float
    omegas: np.ndarray = field(repr=False)   # rad/ps, ascending
    values: np.ndarray = field(repr=False)
    window: str = "hann"
    normalization: str = "S(w) = (1/2pi) int dt exp(-i w t) I(t)"
    max_imag: float = 0.0

    def integral(self) -> float:
        return float(np.sum(self.values) * (self.omegas[1] - self.omegas[0]))

    def half_width(self) -> float:
        """Half width at half maximum around the highest peak (linear interpolation)."""
        S, w = self.values, self.omegas
        k = int(np.argmax(S))
        half = 0.5 * S[k]

        def cross(step):
            j = k
            while 0 <= j + step < S.size and S[j + step] > half:
                j += step
            if not 0 <= j + step < S.size:
                raise NumericError("peak does not fall to half maximum inside the frequency window")
            a, b = S[j], S[j + step]
            return w[j] + (w[j + step] - w[j]) * (a - half) / (a - b)

        return 0.5 * (cross(1) - cross(-1))

    def moments(self):
        """Mean frequency and standard deviation of S treated as a distribution."""
        S, w = self.values, self.omegas
        norm = np.sum(S)
        mean = float(np.sum(S * w) / norm)
        return mean, float(math.sqrt(np.sum(S * (w - mean) ** 2) / norm))


def dsf(trace: IsfTrace, window: str = "hann") -> DsfTrace:
    """Time Fourier transform of I(q, t) on the frequencies 2 pi k / (2 t_max).

    The trace is extended to negative times with I(-t) = conj(I(t)), which makes
    S real.  ``window`` is "hann" (cos^2 taper reaching zero at t_max) or "none".
    """
    t = np.asarray(trace.times, dtype=float)
    n = t.size
    if n < 3:
        raise ConfigError("need at least 3 time points for a DSF")
    dt = t[1] - t[0]
    if t[0] != 0 or np.max(np.abs(np.diff(t) - dt)) > 1e-6 * dt:
        raise ConfigError("DSF needs a uniform time grid starting at t = 0")
    if window == "hann":
        w = 0.5 * (1.0 + np.cos(np.pi * t / t[-1]))
    elif window in ("none", None):
        w = np.ones(n)
        window = "none"
    else:
        raise ConfigError(f"unknown window {window!r}")
    f = np.asarray(trace.values, dtype=complex) * w
    N = 2 * (n - 1)
    g = np.empty(N, dtype=complex)
    g[:n] = f
    g[n - 1] = f[n - 1].real
    g[n:] = np.conj(f[n - 2:0:-1])
    spec = np.fft.fftshift(np.fft.fft(g)) * dt / (2.0 * math.pi)
    omegas = np.fft.fftshift(np.fft.fftfreq(N, d=dt)) * 2.0 * math.pi
    max_imag = float(np.max(np.abs(spec.imag)))
    return DsfTrace(trace.q_used, omegas, spec.real.copy(), window, max_imag=max_imag)


def write_dsf_csv(path, d: DsfTrace) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("omega_radps,S\n")
        for w, s in zip(d.omegas, d.values):
            fh.write(f"{w:.12g},{s:.12g}\n")
    return path


def read_dsf_csv(path) -> DsfTrace:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise TraceIOError(f"cannot read DSF {path}: {exc}") from exc
    return DsfTrace(float("nan"), data[:, 0], data[:, 1])
