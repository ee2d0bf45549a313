"""Damped nonlinear least squares and the fit models used on TCSPC and spectral data.

``least_squares`` is a Levenberg-Marquardt loop (damping x10 on a rejected
step, /10 on an accepted one) with Marquardt diagonal scaling. Built-in models
carry analytic Jacobians; any other callable falls back to central
differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal

FOUR_LN2 = 4.0 * math.log(2.0)


class FitError(RuntimeError):
    """Input that cannot be fitted (degenerate, non-finite, too few points)."""


class ConvergenceError(FitError):
    """The fit ran but did not produce a meaningful result."""


@dataclass(frozen=True)
class Model:
    name: str
    param_names: tuple[str, ...]
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __call__(self, x, p):
        return self.func(np.asarray(x, dtype=float), np.asarray(p, dtype=float))

    def jacobian(self, x, p) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if self.jac is not None:
            return self.jac(x, p)
        return numerical_jacobian(self.func, x, p)


def numerical_jacobian(func, x, p, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``func(x, p)`` with respect to ``p``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1.0)
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        cols.append((func(x, up) - func(x, down)) / (2.0 * h))
    return np.column_stack(cols)


def _gaussian(x, p):
    amplitude, center, fwhm, baseline = p
    return amplitude * np.exp(-FOUR_LN2 * (x - center) ** 2 / fwhm**2) + baseline


def _gaussian_jac(x, p):
    amplitude, center, fwhm, _ = p
    u = x - center
    g = np.exp(-FOUR_LN2 * u**2 / fwhm**2)
    return np.column_stack(
        [
            g,
            amplitude * g * 2.0 * FOUR_LN2 * u / fwhm**2,
            amplitude * g * 2.0 * FOUR_LN2 * u**2 / fwhm**3,
            np.ones_like(x),
        ]
    )


def _lorentzian_dip(x, p):
    center, fwhm, depth, baseline = p
    half = 0.5 * fwhm
    return baseline - depth * half**2 / ((x - center) ** 2 + half**2)


def _lorentzian_dip_jac(x, p):
    center, fwhm, depth, _ = p
    half = 0.5 * fwhm
    u = x - center
    denom = u**2 + half**2
    shape = half**2 / denom
    d_center = half**2 * 2.0 * u / denom**2
    d_fwhm = half * u**2 / denom**2
    return np.column_stack([-depth * d_center, -depth * d_fwhm, -shape, np.ones_like(x)])


def _exponential(x, p):
    amplitude, tau = p
    return amplitude * np.exp(-x / tau)


def _exponential_jac(x, p):
    amplitude, tau = p
    e = np.exp(-x / tau)
    return np.column_stack([e, amplitude * e * x / tau**2])


def _linear(x, p):
    return p[0] * x + p[1]


def _linear_jac(x, p):
    return np.column_stack([x, np.ones_like(x)])


GAUSSIAN = Model("gaussian", ("amplitude", "center", "fwhm", "baseline"), _gaussian, _gaussian_jac)
LORENTZIAN_DIP = Model("lorentzian_dip", ("center", "fwhm", "depth", "baseline"), _lorentzian_dip, _lorentzian_dip_jac)
EXPONENTIAL = Model("exponential", ("amplitude", "tau"), _exponential, _exponential_jac)
LINEAR = Model("linear", ("slope", "intercept"), _linear, _linear_jac)

BUILTIN_MODELS = (GAUSSIAN, LORENTZIAN_DIP, EXPONENTIAL, LINEAR)


@dataclass
class FitResult:
    params: np.ndarray
    param_errors: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    names: tuple[str, ...] = ()
    initial_residual_norm: float = math.nan
    covariance: np.ndarray | None = field(default=None, repr=False)
    derived: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        if name in self.derived:
            return self.derived[name]
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.param_errors[self.names.index(name)])

    def to_dict(self) -> dict:
        return {
            "model_params": list(self.names),
            "params": [float(v) for v in self.params],
            "errors": [float(v) for v in self.param_errors],
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "derived": {k: float(v) for k, v in self.derived.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def least_squares(
    model: Model | Callable,
    init: Sequence[float],
    x,
    y,
    weights=None,
    tol: float = 1e-9,
    max_iter: int = 200,
    absolute_sigma: bool | None = None,
    names: Sequence[str] | None = None,
) -> FitResult:
    """Minimise ``sum w (y - model(x, p))^2`` by damped Gauss-Newton steps.

    Converges when both the relative step length and the relative decrease
    of the cost fall below ``tol``. Covariances use ``(J^T W J)^-1``, scaled by
    the reduced chi-square unless ``absolute_sigma`` (the default when weights
    are given).
    """
    if not isinstance(model, Model):
        model = Model("custom", tuple(names or ()), model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(init, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise FitError("x and y lengths differ")
    if y.size < p.size:
        raise FitError(f"{y.size} data points cannot determine {p.size} parameters")
    if not np.all(np.isfinite(p)):
        raise FitError("initial parameters must be finite")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if absolute_sigma is None:
        absolute_sigma = weights is not None
    sqrt_w = np.sqrt(w)

    def residuals(params):
        return sqrt_w * (y - model(x, params))

    r = residuals(p)
    if not np.all(np.isfinite(r)):
        raise FitError("non-finite residual at the initial parameters")
    cost = float(r @ r)
    initial_norm = math.sqrt(cost)
    damping = 1e-3
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        jac = sqrt_w[:, None] * model.jacobian(x, p)
        normal = jac.T @ jac
        grad = jac.T @ r
        if cost == 0.0 or not np.any(grad):
            converged = True
            iterations -= 1
            break
        scale = np.diag(normal).copy()
        scale[scale <= 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(normal + damping * np.diag(scale), grad)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            trial = p + step
            r_trial = residuals(trial)
            cost_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf
            if cost_trial < cost:
                damping = max(damping / 10.0, 1e-15)
                break
            damping *= 10.0
            if damping > 1e20:
                break
        rel_step = np.linalg.norm(step) / (np.linalg.norm(p) + 1e-300)
        if cost_trial >= cost:
            # no downhill step exists at any damping: numerical minimum
            converged = True
            break
        rel_decrease = (cost - cost_trial) / cost
        p, r, cost = trial, r_trial, cost_trial
        if rel_step < tol and rel_decrease < tol:
            converged = True
            break

    jac = sqrt_w[:, None] * model.jacobian(x, p)
    covariance = np.linalg.pinv(jac.T @ jac)
    dof = y.size - p.size
    if not absolute_sigma and dof > 0:
        covariance = covariance * (cost / dof)
    errors = np.sqrt(np.abs(np.diag(covariance)))
    return FitResult(
        params=p,
        param_errors=errors,
        residual_norm=math.sqrt(cost),
        iterations=iterations,
        converged=converged,
        names=tuple(model.param_names),
        initial_residual_norm=initial_norm,
        covariance=covariance,
    )


def _window_slice(n: int, window) -> slice:
    if window is None:
        return slice(0, n)
    lo, hi = window
    return slice(max(0, int(lo)), min(n, int(hi)))


POISSON_REWEIGHT_PASSES = 10
MODEL_WEIGHT_FLOOR = 0.1


def fit_gaussian(hist, window=None, poisson_weights: bool = True) -> FitResult:
    """Gaussian plus flat baseline fitted to histogram bins ``window = (lo, hi)``.

    Bins are placed at their centers. With ``poisson_weights`` the first pass
    weights each bin by ``1 / max(count, 1)`` and later passes by the inverse
    fitted model, which removes the low bias of count-based weights.
    """
    sl = _window_slice(hist.counts.size, window)
    x = hist.bin_centers[sl].astype(float)
    y = hist.counts[sl].astype(float)
    if np.count_nonzero(y) < 5:
        raise FitError(f"degenerate histogram: {np.count_nonzero(y)} non-empty bins in the fit window (need 5)")

    baseline = float(y.min())
    excess = np.clip(y - baseline, 0.0, None)
    if excess.sum() == 0:
        raise ConvergenceError("flat histogram: no peak above the baseline")
    center = float(np.average(x, weights=excess))
    sigma = math.sqrt(float(np.average((x - center) ** 2, weights=excess)))
    init = [float(excess.max()), center, max(2.3548 * sigma, float(hist.spec.bin_width)), baseline]

    weights = 1.0 / np.maximum(y, 1.0) if poisson_weights else None
    result = least_squares(GAUSSIAN, init, x, y, weights=weights)
    if poisson_weights and result.converged:
        # reweight by the model until the weights settle: the fixed point is the Poisson likelihood maximum
        for _ in range(POISSON_REWEIGHT_PASSES):
            model = np.maximum(GAUSSIAN(x, result.params), MODEL_WEIGHT_FLOOR)
            previous = result.params.copy()
            result = least_squares(GAUSSIAN, previous, x, y, weights=1.0 / model)
            if not result.converged or np.allclose(result.params, previous, rtol=1e-7, atol=1e-9):
                break
    amplitude, center, fwhm, _ = result.params
    result.params[2] = abs(fwhm)
    span = x[-1] - x[0]
    if not result.converged:
        raise ConvergenceError("Gaussian fit did not converge")
    if amplitude <= 3.0 * result.error("amplitude") or not x[0] <= center <= x[-1] or abs(fwhm) > span:
        raise ConvergenceError(f"no significant Gaussian peak (amplitude {amplitude:.3g}, fwhm {abs(fwhm):.3g})")
    result.derived["sigma"] = abs(fwhm) / 2.3548200450309493
    return result


def find_peaks(hist, min_separation: float, min_height: float = 0.05) -> list[tuple[float, float]]:
    """Local maxima of a histogram as ``(bin_center_ps, count)``.

    Peaks must exceed ``min_height`` times the histogram maximum and lie at
    least ``min_separation`` ps apart (the taller one wins).
    """
    bw = hist.spec.bin_width
    distance = int(math.ceil(min_separation / bw))
    if distance < 2:
        raise ValueError("min_separation must span at least 2 bins")
    counts = hist.counts.astype(float)
    top = counts.max(initial=0.0)
    if top <= 0:
        return []
    idx, props = signal.find_peaks(counts, height=min_height * top, distance=distance)
    centers = hist.bin_centers
    return [(float(centers[i]), float(counts[i])) for i in idx]


def refine_peak_times(hist, peaks, half_width: float) -> list[float]:
    """Count-weighted centroid of the bins within ``half_width`` ps of each peak."""
    centers = hist.bin_centers
    counts = hist.counts.astype(float)
    out = []
    for t, _ in peaks:
        near = np.abs(centers - t) <= half_width
        weight = counts[near]
        out.append(float(np.average(centers[near], weights=weight)) if weight.sum() > 0 else float(t))
    return out


def log_linear_decay(times, heights) -> tuple[float, float]:
    """Closed-form ``(amplitude, tau)`` from a straight-line fit of ``ln(height)``."""
    t = np.asarray(times, dtype=float)
    logs = np.log(np.asarray(heights, dtype=float))
    t_mean = t.mean()
    slope = float(np.sum((t - t_mean) * (logs - logs.mean())) / np.sum((t - t_mean) ** 2))
    intercept = float(logs.mean() - slope * t_mean)
    if slope >= 0:
        raise ConvergenceError("peak heights do not decay; decay time is unbounded")
    return math.exp(intercept), -1.0 / slope


def fit_exponential_peaks(peaks, include_first: bool = True, poisson_weights: bool = False) -> FitResult:
    """Fit ``h = A exp(-t / tau)`` to ``(time, height)`` peaks.

    The log-space straight line seeds the damped fit on linear heights.
    ``include_first=False`` drops the earliest peak (e.g. the directly
    transmitted through-port pulse). With ``poisson_weights`` the heights are
    treated as counts and weighted by ``1 / h``.
    """
    peaks = sorted(peaks)
    if not include_first:
        peaks = peaks[1:]
    if len(peaks) < 2:
        raise FitError(f"exponential fit needs at least 2 peaks, got {len(peaks)}")
    t = np.array([p[0] for p in peaks], dtype=float)
    h = np.array([p[1] for p in peaks], dtype=float)
    if np.any(h <= 0):
        raise FitError("peak heights must be positive")
    init = log_linear_decay(t, h)
    result = least_squares(EXPONENTIAL, init, t, h, weights=1.0 / h if poisson_weights else None)
    if not result.converged or result["tau"] <= 0 or not math.isfinite(result["tau"]):
        raise ConvergenceError(f"exponential fit failed (tau = {result['tau']:.4g})")
    return result


def fit_lorentzian(wavelengths, transmission, window=None, noise_floor: float | None = None) -> FitResult:
    """Inverted Lorentzian dip on a transmission spectrum; ``derived['q']`` is the loaded Q.

    ``window = (lo_nm, hi_nm)`` restricts the data. The fit runs on
    wavelengths measured from the window midpoint.
    """
    wl = np.asarray(wavelengths, dtype=float)
    tr = np.asarray(transmission, dtype=float)
    if window is not None:
        keep = (wl >= window[0]) & (wl <= window[1])
        wl, tr = wl[keep], tr[keep]
    if wl.size < 8:
        raise FitError("too few spectral points in the fit window")
    ref = 0.5 * (wl[0] + wl[-1])
    x = wl - ref
    baseline = float(tr.max())
    depth = baseline - float(tr.min())
    noise = float(np.std(np.diff(tr)) / math.sqrt(2.0)) if noise_floor is None else noise_floor
    if depth <= max(5.0 * noise, 1e-9 * abs(baseline)):
        raise ConvergenceError("no resonance dip above the noise floor in the window")
    i_min = int(tr.argmin())
    below = np.flatnonzero(tr < baseline - 0.5 * depth)
    width = float(x[below[-1]] - x[below[0]]) if below.size > 1 else float(x[1] - x[0])
    init = [float(x[i_min]), max(width, float(x[1] - x[0])), depth, baseline]

    result = least_squares(LORENTZIAN_DIP, init, x, tr)
    center, fwhm, depth_fit, _ = result.params
    result.params[1] = abs(fwhm)
    if not result.converged or depth_fit <= 0 or not x[0] <= center <= x[-1] or abs(fwhm) > x[-1] - x[0]:
        raise ConvergenceError("Lorentzian fit did not find a resonance inside the window")
    result.params[0] = center + ref
    result.derived["q"] = (center + ref) / abs(fwhm)
    return result
