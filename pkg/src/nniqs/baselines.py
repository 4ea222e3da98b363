"""Classical up-scaling benchmarks: bilinear, per-axis natural cubic splines, bicubic convolution."""
from __future__ import annotations

import enum

import numpy as np
from scipy.interpolate import CubicSpline

BICUBIC_A = -0.5


class InterpolationMethod(str, enum.Enum):
    BILINEAR = "bilinear"
    AXIS_CUBIC = "axiscubic"
    BICUBIC = "bicubic"


class OutOfHull(ValueError):
    pass


def _check_hull(axis: np.ndarray, x: np.ndarray, name: str) -> None:
    if np.any(x < axis[0]) or np.any(x > axis[-1]):
        raise OutOfHull(f"{name} query outside [{axis[0]}, {axis[-1]}]; baselines do not extrapolate")


def _linear_1d(axis: np.ndarray, values: np.ndarray, x: np.ndarray, dim: int) -> np.ndarray:
    lo = np.clip(np.searchsorted(axis, x, side="right") - 1, 0, len(axis) - 2)
    frac = (x - axis[lo]) / (axis[lo + 1] - axis[lo])
    a = np.take(values, lo, axis=dim)
    b = np.take(values, lo + 1, axis=dim)
    shape = [1] * values.ndim
    shape[dim] = -1
    frac = frac.reshape(shape)
    return (1.0 - frac) * a + frac * b


def _spline_1d(axis, values, x, dim):
    if len(axis) < 3:
        return _linear_1d(axis, values, x, dim)
    return CubicSpline(axis, values, axis=dim, bc_type="natural")(x)


def keys_kernel(s: np.ndarray, a: float = BICUBIC_A) -> np.ndarray:
    s = np.abs(s)
    out = np.zeros_like(s)
    near = s <= 1
    far = (s > 1) & (s < 2)
    out[near] = (a + 2) * s[near] ** 3 - (a + 3) * s[near] ** 2 + 1
    out[far] = a * s[far] ** 3 - 5 * a * s[far] ** 2 + 8 * a * s[far] - 4 * a
    return out


def _conv_1d(axis, values, x, dim):
    n = len(axis)
    step = (axis[-1] - axis[0]) / (n - 1) if n > 1 else 1.0
    if n > 2 and not np.allclose(np.diff(axis), step, rtol=1e-9, atol=1e-12):
        raise ValueError("bicubic convolution needs a uniformly spaced axis")
    u = (x - axis[0]) / step
    base = np.floor(u).astype(int)
    # exact node hits: snap to avoid ulp-level kernel leakage
    nodes = np.isclose(u, np.round(u), rtol=0, atol=1e-12)
    u = np.where(nodes, np.round(u), u)
    base = np.where(nodes, np.round(u).astype(int), base)
    shape = [1] * values.ndim
    shape[dim] = -1
    out = 0.0
    for k in (-1, 0, 1, 2):
        idx = np.clip(base + k, 0, n - 1)
        w = keys_kernel(u - (base + k)).reshape(shape)
        out = out + w * np.take(values, idx, axis=dim)
    return out


_AXIS_INTERP = {
    InterpolationMethod.BILINEAR: _linear_1d,
    InterpolationMethod.AXIS_CUBIC: _spline_1d,
    InterpolationMethod.BICUBIC: _conv_1d,
}


def upscale_grid(values, t_axis, mu_axis, method, t_target, mu_target) -> np.ndarray:
    """Evaluate the interpolant of ``values`` (rows = T, cols = mu) on a target grid.

    Separable in both axes; mu is processed first, then T.
    """
    method = InterpolationMethod(method)
    values = np.asarray(values, dtype=float)
    t_axis, mu_axis = np.asarray(t_axis, float), np.asarray(mu_axis, float)
    t_target, mu_target = np.asarray(t_target, float), np.asarray(mu_target, float)
    if values.shape != (len(t_axis), len(mu_axis)):
        raise ValueError("grid shape does not match its axes")
    _check_hull(t_axis, t_target, "T")
    _check_hull(mu_axis, mu_target, "mu")
    interp = _AXIS_INTERP[method]
    rows = _along(interp, mu_axis, values, mu_target, 1)
    return _along(interp, t_axis, rows, t_target, 0)


def _along(interp, axis, values, x, dim):
    if len(axis) == 1:
        return np.repeat(values, len(x), dim)
    out = interp(axis, values, x, dim)
    # targets sitting on a node copy it verbatim
    k = np.clip(np.searchsorted(axis, x), 0, len(axis) - 1)
    hit = np.flatnonzero(axis[k] == x)
    if hit.size:
        idx = [slice(None)] * values.ndim
        idx[dim] = hit
        src = [slice(None)] * values.ndim
        src[dim] = k[hit]
        out[tuple(idx)] = values[tuple(src)]
    return out


def interpolate_point(values, t_axis, mu_axis, method, x) -> float:
    t, mu = x
    return float(upscale_grid(values, t_axis, mu_axis, method, [t], [mu])[0, 0])
