"""(T/g, mu/g) condensate grids, their normalization, and the continuum reference."""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .quadrature import thermal_integral
from .spin_model import MAX_SITES, ModelParams
from .thermal import expectation_curve, spectral_observable

EULER_GAMMA = 0.5772156649015329
PHOTON_MASS = 1.0 / math.sqrt(math.pi)  # m_gamma / g
TRANSITION_BAND = (0.4, 0.6)

PHD_MAGIC = "PHD1"
PHD_VERSION = 1


@dataclass(frozen=True)
class AxisGrid:
    t_values: np.ndarray
    mu_values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float)
        mu = np.asarray(self.mu_values, dtype=float)
        object.__setattr__(self, "t_values", t)
        object.__setattr__(self, "mu_values", mu)
        for name, axis in (("t_values", t), ("mu_values", mu)):
            if axis.ndim != 1 or len(axis) == 0:
                raise ValueError(f"{name} must be a non-empty 1-D axis")
            if np.any(np.diff(axis) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            if not np.all(np.isfinite(axis)):
                raise ValueError(f"{name} must be finite")
        if t[0] < 0.1 - 1e-12:
            raise ValueError(f"temperature axis must start at T/g >= 0.1, got {t[0]}")
        if mu[0] < 0:
            raise ValueError("chemical potential axis must be non-negative")

    @classmethod
    def uniform(cls, n_t: int, n_mu: int | None = None, t_min: float = 0.1,
                t_max: float = 2.5, mu_max: float = 1.4) -> "AxisGrid":
        n_mu = n_t if n_mu is None else n_mu
        return cls(np.linspace(t_min, t_max, n_t), np.linspace(0.0, mu_max, n_mu))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.t_values), len(self.mu_values)


@dataclass(frozen=True)
class PhaseDiagram:
    """Condensate in units of g; rows follow T ascending, columns follow mu ascending."""

    params: ModelParams
    axes: AxisGrid
    values: np.ndarray = field(repr=False)
    generator_version: str = __version__

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != self.axes.shape:
            raise ValueError(f"grid shape {v.shape} does not match axes {self.axes.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("phase diagram contains non-finite values")

    def subgrid(self, rows, cols) -> "PhaseDiagram":
        rows, cols = np.asarray(rows), np.asarray(cols)
        axes = AxisGrid(self.axes.t_values[rows], self.axes.mu_values[cols])
        return PhaseDiagram(self.params, axes, self.values[np.ix_(rows, cols)],
                            self.generator_version)


def generate(params: ModelParams, axes: AxisGrid, threads: int = 1) -> PhaseDiagram:
    """Evaluate the Gibbs condensate on every (T, mu) node.

    The mu term is proportional to the conserved magnetization, so one
    diagonalization at mu = 0 serves every column via an exact per-sector
    energy shift.
    """
    if params.n_sites > MAX_SITES:
        raise ValueError(f"N={params.n_sites} exceeds the dense limit {MAX_SITES}")
    base = spectral_observable(params.with_mu(0.0))

    def column(mu: float) -> np.ndarray:
        return expectation_curve(base.shifted_mu(mu), axes.t_values)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            cols = list(pool.map(column, axes.mu_values))
    else:
        cols = [column(mu) for mu in axes.mu_values]
    return PhaseDiagram(params.with_mu(0.0), axes, np.stack(cols, axis=1))


class DegenerateNormalization(ValueError):
    pass


def minmax_normalize(values) -> np.ndarray:
    v = np.asarray(getattr(values, "values", values), dtype=float)
    lo, hi = v.min(), v.max()
    if not hi > lo:
        raise DegenerateNormalization("degenerate normalization: grid is constant")
    out = (v - lo) / (hi - lo)
    # pin the extremes so they are exactly 0 and 1
    out[v == lo] = 0.0
    out[v == hi] = 1.0
    return out


def transition_mask(normalized, band=TRANSITION_BAND) -> np.ndarray:
    v = np.asarray(normalized, dtype=float)
    return (v >= band[0]) & (v <= band[1])


def analytic_condensate(t_over_g) -> np.ndarray:
    """Continuum massless-Schwinger condensate in units of g (independent of mu)."""
    t = np.atleast_1d(np.asarray(t_over_g, dtype=float))
    if np.any(~(t > 0)):
        raise ValueError("temperatures must be positive")
    prefactor = -PHOTON_MASS / (2.0 * math.pi) * math.exp(EULER_GAMMA)
    out = np.array([prefactor * math.exp(2.0 * thermal_integral(PHOTON_MASS / ti)) for ti in t])
    return out


@dataclass
class TheoryComparison:
    t_values: np.ndarray
    simulated: np.ndarray
    theory: np.ndarray
    max_abs: float
    mean_abs: float
    simulated_monotone: bool
    theory_monotone: bool


def _monotone_in_t(normalized: np.ndarray) -> bool:
    # raw condensate is negative and shrinks in magnitude with T, so the
    # normalized curve should not decrease
    return bool(np.all(np.diff(normalized) >= -1e-12))


def compare_to_theory(diagram: PhaseDiagram) -> TheoryComparison:
    t = diagram.axes.t_values
    if t[-1] < 2.0:
        raise ValueError("theory comparison needs T/g up to at least 2.0")
    if diagram.axes.mu_values[0] != 0.0:
        raise ValueError("theory comparison needs a mu/g = 0 column")
    sim = minmax_normalize(diagram.values[:, 0])
    theory = minmax_normalize(analytic_condensate(t))
    dev = np.abs(sim - theory)
    return TheoryComparison(t, sim, theory, float(dev.max()), float(dev.mean()),
                            _monotone_in_t(sim), _monotone_in_t(theory))


class FormatError(ValueError):
    pass


def write_phd(diagram: PhaseDiagram, path, note: str = "") -> None:
    p = diagram.params
    rows, cols = diagram.axes.shape
    header = [
        f"{PHD_MAGIC} {PHD_VERSION}",
        f"generator_version={diagram.generator_version}",
        f"n_sites={p.n_sites}",
        f"w_over_g={p.w_over_g!r}",
        f"m_over_g={p.m_over_g!r}",
        "mu_over_g=axis",
        f"rows={rows}",
        f"cols={cols}",
        "t_values=" + " ".join(repr(float(x)) for x in diagram.axes.t_values),
        "mu_values=" + " ".join(repr(float(x)) for x in diagram.axes.mu_values),
        "note=" + note.replace("\n", " "),
        "END",
    ]
    payload = np.ascontiguousarray(diagram.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(payload)


def read_phd(path) -> PhaseDiagram:
    data = Path(path).read_bytes()
    buf = io.BytesIO(data)
    first = buf.readline().decode("ascii", errors="replace").split()
    if len(first) != 2 or first[0] != PHD_MAGIC:
        raise FormatError(f"{path}: not a {PHD_MAGIC} file")
    if first[1] != str(PHD_VERSION):
        raise FormatError(f"{path}: unsupported {PHD_MAGIC} version {first[1]}")
    fields = {}
    while True:
        line = buf.readline()
        if not line:
            raise FormatError(f"{path}: header not terminated")
        text = line.decode("ascii").rstrip("\n")
        if text == "END":
            break
        key, _, value = text.partition("=")
        fields[key] = value
    try:
        rows, cols = int(fields["rows"]), int(fields["cols"])
        t = np.array([float(x) for x in fields["t_values"].split()])
        mu = np.array([float(x) for x in fields["mu_values"].split()])
        params = ModelParams(int(fields["n_sites"]), float(fields["w_over_g"]), 0.0,
                             float(fields.get("m_over_g", "0.0")))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad header: {exc}") from exc
    raw = buf.read()
    if len(raw) != 8 * rows * cols or len(t) != rows or len(mu) != cols:
        raise FormatError(f"{path}: payload does not match {rows}x{cols}")
    values = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(float)
    return PhaseDiagram(params, AxisGrid(t, mu), values, fields.get("generator_version", ""))
