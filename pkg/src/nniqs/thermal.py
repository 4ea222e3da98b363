"""Exact diagonalization of the sector blocks and Gibbs-state averages of the condensate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spin_model import (
    HamiltonianBlock,
    ModelParams,
    SectorBasis,
    build_block,
    build_condensate_diagonal,
    enumerate_sectors,
)


class DiagonalizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EigenSystem:
    sector: SectorBasis
    energies: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SpectralObservable:
    """Flat list of (E_k, <k|O|k>) over every eigenstate of every sector.

    ``magnetization`` holds the sum_n Z_n eigenvalue of each level so that a
    change of chemical potential can be applied as an exact energy shift.
    """

    energies: np.ndarray = field(repr=False)
    diagonal: np.ndarray = field(repr=False)
    scale: float = 1.0
    magnetization: np.ndarray | None = field(default=None, repr=False)

    @property
    def e_min(self) -> float:
        return float(self.energies.min())

    def shifted_mu(self, delta_mu: float) -> "SpectralObservable":
        """Spectrum after adding ``delta_mu / 2 * sum_n Z_n`` to the Hamiltonian."""
        if self.magnetization is None:
            raise ValueError("observable carries no magnetization labels")
        energies = self.energies + 0.5 * delta_mu * self.magnetization
        return SpectralObservable(energies, self.diagonal, self.scale, self.magnetization)


def diagonalize(block: HamiltonianBlock, tol: float = 1e-10) -> EigenSystem:
    h = block.matrix
    if h.shape[0] == 1:
        return EigenSystem(block.sector, h[0].copy(), np.ones((1, 1)))
    try:
        energies, vectors = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(
            f"eigensolver failed on sector N={block.sector.n_sites}, "
            f"k={block.sector.hamming_weight}: {exc}"
        ) from exc
    norm = max(np.abs(h).sum(axis=1).max(), 1.0)
    residual = np.abs(h @ vectors - vectors * energies).max()
    if not residual <= tol * norm:
        raise DiagonalizationError(
            f"residual {residual:.3e} too large on sector k={block.sector.hamming_weight}"
        )
    return EigenSystem(block.sector, energies, vectors)


def spectral_observable(params: ModelParams) -> SpectralObservable:
    cond = build_condensate_diagonal(params)
    energies, diag, mags = [], [], []
    for sector in enumerate_sectors(params):
        eig = diagonalize(build_block(params, sector))
        d = cond.values[sector.states].astype(float)
        energies.append(eig.energies)
        diag.append((eig.vectors**2 * d[:, None]).sum(axis=0))
        mags.append(np.full(sector.dim, sector.magnetization, dtype=float))
    return SpectralObservable(
        np.concatenate(energies), np.concatenate(diag), cond.scale, np.concatenate(mags)
    )


def gibbs_weights(obs: SpectralObservable, t_over_g: float) -> np.ndarray:
    return np.exp(-(obs.energies - obs.e_min) / t_over_g)


def thermal_expectation(obs: SpectralObservable, t_over_g: float) -> float:
    """``scale * tr(rho O)`` with ``rho = exp(-H/T) / tr exp(-H/T)``.

    ``t_over_g = inf`` gives the maximally mixed state.
    """
    if not t_over_g > 0:
        raise ValueError(f"temperature must be positive, got {t_over_g}")
    if math.isinf(t_over_g):
        return obs.scale * float(obs.diagonal.mean())
    w = gibbs_weights(obs, t_over_g)
    return obs.scale * float(w @ obs.diagonal / w.sum())


def expectation_curve(obs: SpectralObservable, t_axis) -> np.ndarray:
    t = np.asarray(t_axis, dtype=float)
    if np.any(t <= 0):
        raise ValueError("temperatures must be positive")
    # (len(t), levels); shifted exponents are <= 0 so nothing overflows
    w = np.exp(-(obs.energies[None, :] - obs.e_min) / t[:, None])
    return obs.scale * (w @ obs.diagonal) / w.sum(axis=1)


def _check_axis(t_axis) -> np.ndarray:
    t = np.asarray(t_axis, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("temperature axis must be a non-empty 1-D list")
    if np.any(np.diff(t) <= 0):
        raise ValueError("temperature axis must be strictly increasing")
    if t[0] < 0.1:
        raise ValueError(f"temperature axis must start at T/g >= 0.1, got {t[0]}")
    return t


def sweep(params: ModelParams, t_axis) -> np.ndarray:
    """Condensate (units of g) along a temperature axis from a single diagonalization."""
    t = _check_axis(t_axis)
    return expectation_curve(spectral_observable(params), t)
