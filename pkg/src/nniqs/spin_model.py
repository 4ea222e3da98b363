"""Spin-chain form of the lattice Schwinger model, block-decomposed by magnetization.

Conventions: site ``n`` (1-based) lives on bit ``n - 1`` of a basis mask and a set
bit means ``Z_n = +1``. All energies are in units of the coupling ``g``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np

MAX_SITES = 16
MAX_DENSE_SITES = 10


@dataclass(frozen=True)
class ModelParams:
    n_sites: int
    w_over_g: float
    mu_over_g: float = 0.0
    m_over_g: float = 0.0

    def __post_init__(self):
        if not isinstance(self.n_sites, (int, np.integer)):
            raise TypeError(f"n_sites must be an integer, got {self.n_sites!r}")
        if not 2 <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must lie in [2, {MAX_SITES}], got {self.n_sites}")
        if not (np.isfinite(self.w_over_g) and self.w_over_g > 0):
            raise ValueError(f"w_over_g must be positive, got {self.w_over_g}")
        if not (np.isfinite(self.mu_over_g) and self.mu_over_g >= 0):
            raise ValueError(f"mu_over_g must be non-negative, got {self.mu_over_g}")
        if self.m_over_g != 0:
            raise ValueError("only the massless model (m_over_g = 0) is supported")

    def with_mu(self, mu_over_g: float) -> "ModelParams":
        return ModelParams(self.n_sites, self.w_over_g, mu_over_g, self.m_over_g)


@dataclass(frozen=True)
class SectorBasis:
    n_sites: int
    hamming_weight: int
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def magnetization(self) -> int:
        """Eigenvalue of sum_n Z_n on this sector."""
        return 2 * self.hamming_weight - self.n_sites

    @cached_property
    def index(self) -> dict[int, int]:
        return {int(s): i for i, s in enumerate(self.states)}


@dataclass(frozen=True)
class HamiltonianBlock:
    sector: SectorBasis
    matrix: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CondensateDiagonal:
    """Diagonal of sum_n (-1)^n Z_n over all 2^N masks, plus the unit conversion."""

    values: np.ndarray = field(repr=False)
    scale: float


def spin_values(states: np.ndarray, n_sites: int) -> np.ndarray:
    """``z[i, n-1]`` is the Z eigenvalue (+1/-1) of site n in mask ``states[i]``."""
    bits = (np.asarray(states, dtype=np.int64)[:, None] >> np.arange(n_sites)) & 1
    return 2 * bits - 1


def enumerate_sectors(params: ModelParams) -> list[SectorBasis]:
    n = params.n_sites
    masks = np.arange(1 << n, dtype=np.int64)
    weights = np.array([bin(m).count("1") for m in range(1 << n)])
    sectors = []
    for k in range(n + 1):
        states = masks[weights == k]
        assert len(states) == comb(n, k)
        sectors.append(SectorBasis(n, k, states))
    return sectors


def diagonal_energies(params: ModelParams, states: np.ndarray) -> np.ndarray:
    n = params.n_sites
    z = spin_values(states, n).astype(float)
    coupling = 1.0 / (8.0 * params.w_over_g)
    # prefix[:, n-1] = sum_{l<=n} z_l; sum_{k<l<=n} z_k z_l = (prefix^2 - n) / 2
    prefix = np.cumsum(z, axis=1)
    sites = np.arange(1, n + 1)
    pair_sums = (prefix**2 - sites) / 2.0
    long_range = pair_sums[:, 1 : n - 1].sum(axis=1)  # n = 2..N-1
    stagger_sign = (-1.0) ** sites
    onsite = 0.5 * ((params.m_over_g * stagger_sign + params.mu_over_g) * z).sum(axis=1)
    odd = (sites[: n - 1] % 2).astype(float)
    background = (prefix[:, : n - 1] * odd).sum(axis=1)
    return coupling * long_range + onsite - coupling * background


def build_block(params: ModelParams, sector: SectorBasis) -> HamiltonianBlock:
    if params.n_sites < 2:
        raise ValueError("need at least two sites")
    if sector.n_sites != params.n_sites:
        raise ValueError(
            f"sector built for N={sector.n_sites}, params have N={params.n_sites}"
        )
    dim = sector.dim
    matrix = np.zeros((dim, dim))
    matrix[np.diag_indices(dim)] = diagonal_energies(params, sector.states)
    index = sector.index
    hop = params.w_over_g  # (1/2)(w/g) * <swapped|XX+YY|mask> with matrix element 2
    for i, mask in enumerate(sector.states):
        mask = int(mask)
        for bond in range(params.n_sites - 1):
            pair = (mask >> bond) & 0b11
            if pair == 0b01 or pair == 0b10:
                j = index[mask ^ (0b11 << bond)]
                matrix[i, j] = hop
    return HamiltonianBlock(sector, matrix)


def build_blocks(params: ModelParams) -> list[HamiltonianBlock]:
    return [build_block(params, s) for s in enumerate_sectors(params)]


def build_condensate_diagonal(params: ModelParams) -> CondensateDiagonal:
    n = params.n_sites
    z = spin_values(np.arange(1 << n), n)
    signs = (-1) ** np.arange(1, n + 1)
    values = (z * signs).sum(axis=1)
    return CondensateDiagonal(values=values, scale=params.w_over_g / n)


_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
# bit value 1 <-> Z = +1, so in the (bit=0, bit=1) ordering Z = diag(-1, +1)
_PAULI_Z = np.diag([-1.0, 1.0]).astype(complex)


def site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a one-site operator at 1-based ``site``; site 1 is the least significant bit."""
    out = np.eye(1, dtype=complex)
    for n in range(n_sites, 0, -1):
        out = np.kron(out, op if n == site else np.eye(2))
    return out


def dense_oracle(params: ModelParams) -> np.ndarray:
    """Full 2^N Hamiltonian assembled term by term from Kronecker products.

    Only meant as a cross-check of :func:`build_block`.
    """
    n = params.n_sites
    if n > MAX_DENSE_SITES:
        raise ValueError(f"dense oracle limited to N <= {MAX_DENSE_SITES}, got {n}")
    g_over_w = 1.0 / params.w_over_g
    X = [site_operator(_PAULI_X, s, n) for s in range(1, n + 1)]
    Y = [site_operator(_PAULI_Y, s, n) for s in range(1, n + 1)]
    Z = [site_operator(_PAULI_Z, s, n) for s in range(1, n + 1)]
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for top in range(2, n):
        for k in range(1, top + 1):
            for l in range(k + 1, top + 1):
                H += g_over_w / 8.0 * Z[k - 1] @ Z[l - 1]
    for s in range(1, n):
        H += 0.5 * params.w_over_g * (X[s - 1] @ X[s] + Y[s - 1] @ Y[s])
    for s in range(1, n + 1):
        H += 0.5 * (params.m_over_g * (-1) ** s + params.mu_over_g) * Z[s - 1]
    for s in range(1, n):
        for l in range(1, s + 1):
            H -= g_over_w / 8.0 * (s % 2) * Z[l - 1]
    assert np.abs(H.imag).max() < 1e-12
    return H.real


def total_magnetization(n_sites: int) -> np.ndarray:
    """Dense diagonal of sum_n Z_n."""
    return spin_values(np.arange(1 << n_sites), n_sites).sum(axis=1)


def assemble_blocks(blocks: list[HamiltonianBlock]) -> np.ndarray:
    n = blocks[0].sector.n_sites
    full = np.zeros((1 << n, 1 << n))
    for block in blocks:
        idx = block.sector.states
        full[np.ix_(idx, idx)] = block.matrix
    return full
