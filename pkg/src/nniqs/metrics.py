"""PSNR, relative-error maps and IQR-trimmed region statistics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import from_model_space

PSNR_CAP = 300.0
RELATIVE_FLOOR = 1e-8


def psnr(pred, truth) -> float:
    """``-10 log10(MSE)`` for unit-peak (model-space) grids, capped at 300 dB."""
    p, g = np.asarray(pred, float), np.asarray(truth, float)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    mse = float(np.mean((p - g) ** 2))
    if mse < 1e-30:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(mse))


@dataclass
class RelativeError:
    values: np.ndarray
    floored: np.ndarray  # where |truth| fell below the floor


def relative_error_map(pred, truth, eps: float = RELATIVE_FLOOR) -> RelativeError:
    p, g = np.asarray(pred, float), np.asarray(truth, float)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    return relative_error_physical(from_model_space(p), from_model_space(g), eps)


def relative_error_physical(p, g, eps: float = RELATIVE_FLOOR) -> RelativeError:
    p, g = np.asarray(p, float), np.asarray(g, float)
    floored = np.abs(g) < eps
    return RelativeError(np.abs(p - g) / np.maximum(np.abs(g), eps), floored)


def quartiles(values) -> tuple[float, float, float]:
    """Q1, median, Q3 by linear interpolation between order statistics."""
    v = np.sort(np.asarray(values, float))
    return tuple(float(np.quantile(v, q, method="linear")) for q in (0.25, 0.5, 0.75))


@dataclass
class ErrorReport:
    scenario: str
    region: str
    mean: float
    median: float
    q1: float
    q3: float
    max_after_trim: float
    total: int
    trimmed: int
    floored: int = 0
    method: str = ""
    ratio: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def region_stats(errors, mask=None, scenario: str = "", region: str = "whole",
                 floored=None, method: str = "", ratio: int = 0) -> ErrorReport:
    e = np.asarray(getattr(errors, "values", errors), float)
    if floored is None and hasattr(errors, "floored"):
        floored = errors.floored
    m = np.ones(e.shape, bool) if mask is None else np.asarray(mask, bool)
    if m.shape != e.shape:
        raise ValueError(f"mask shape {m.shape} does not match error grid {e.shape}")
    sel = m & np.isfinite(e)
    vals = e[sel]
    if vals.size == 0:
        raise ValueError("empty mask: no entries to summarise")
    q1, _, q3 = quartiles(vals)
    iqr = q3 - q1
    kept = vals[(vals >= q1 - 1.5 * iqr) & (vals <= q3 + 1.5 * iqr)]
    k1, med, k3 = quartiles(kept)
    n_floor = int(np.asarray(floored, bool)[sel].sum()) if floored is not None else 0
    return ErrorReport(scenario, region, float(kept.mean()), med, k1, k3, float(kept.max()),
                       int(vals.size), int(vals.size - kept.size), n_floor, method, ratio)


def pooled_stats(errors: list[np.ndarray], masks: list[np.ndarray] | None = None, **kw) -> ErrorReport:
    """Region statistics over several maps of different shapes."""
    masks = masks or [None] * len(errors)
    vals, flo = [], []
    for e, m in zip(errors, masks):
        ev = np.asarray(getattr(e, "values", e), float)
        mm = np.ones(ev.shape, bool) if m is None else np.asarray(m, bool)
        vals.append(ev[mm])
        fl = getattr(e, "floored", None)
        flo.append(np.asarray(fl, bool)[mm] if fl is not None else np.zeros(mm.sum(), bool))
    return region_stats(np.concatenate(vals), None, floored=np.concatenate(flo), **kw)


def write_error_csv(path, error: np.ndarray, t_values=None, mu_values=None) -> None:
    e = np.asarray(getattr(error, "values", error), float)
    rows, cols = e.shape
    t_values = np.arange(rows) if t_values is None else t_values
    mu_values = np.arange(cols) if mu_values is None else mu_values
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_over_g", "mu_over_g", "relative_error"])
        for i in range(rows):
            for j in range(cols):
                w.writerow([repr(float(t_values[i])), repr(float(mu_values[j])), repr(float(e[i, j]))])


def write_summary_json(path, reports: list[ErrorReport], extra: dict | None = None) -> None:
    doc = {"reports": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
