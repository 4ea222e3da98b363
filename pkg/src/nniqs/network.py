"""Local implicit field: a convolutional encoder producing a latent grid and an MLP
decoder queried at continuous coordinates with a four-corner area-weighted ensemble."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from .dataset import cell_centers

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class NetworkConfig:
    in_channels: int = 3
    latent_dim: int = 64
    n_resblocks: int = 8
    hidden: tuple[int, ...] = (256, 256, 256, 256, 256)
    dtype: str = "float32"
    # the value channel and the decoder output are standardised as (v - shift) / scale
    value_shift: float = 0.5
    value_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
        if not self.value_scale > 0:
            raise ValueError("value_scale must be positive")
        if self.latent_dim < 1 or self.n_resblocks < 0 or self.in_channels < 1:
            raise ValueError(f"invalid network config {self}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


MINIATURE = NetworkConfig(latent_dim=4, n_resblocks=1, hidden=(8, 8), dtype="float64")


def _conv(c_in: int, c_out: int) -> nn.Conv2d:
    # width-1 replicate padding == numpy "symmetric" padding; keeps H x W
    return nn.Conv2d(c_in, c_out, 3, stride=1, padding=1, padding_mode="replicate")


class ResBlock(nn.Module):
    def __init__(self, width: int):
        super().__init__()
        self.conv1 = _conv(width, width)
        self.conv2 = _conv(width, width)

    def forward(self, x):
        return x + self.conv2(torch.relu(self.conv1(x)))


class Encoder(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        d = config.latent_dim
        self.shift, self.scale = config.value_shift, config.value_scale
        self.head = _conv(config.in_channels, d)
        self.blocks = nn.Sequential(*[ResBlock(d) for _ in range(config.n_resblocks)])
        self.tail = _conv(d, d)

    def forward(self, x):
        x = torch.cat([(x[:, :1] - self.shift) / self.scale, x[:, 1:]], dim=1)
        h = self.head(x)
        return h + self.tail(self.blocks(h))


class Decoder(nn.Module):
    """MLP on [latent (D), scaled offset (2), scaled cell (2)] -> model-space scalar."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.shift, self.scale = config.value_shift, config.value_scale
        layers, width = [], config.latent_dim + 4
        for h in config.hidden:
            layers += [nn.Linear(width, h), nn.ReLU()]
            width = h
        layers.append(nn.Linear(width, 1))
        self.mlp = nn.Sequential(*layers)

    def forward(self, latent, offset, cell):
        out = self.mlp(torch.cat([latent, offset, cell], dim=-1)).squeeze(-1)
        return self.shift + self.scale * out


def init_parameters(module: nn.Module, seed: int) -> None:
    """Weights uniform in +-1/sqrt(fan_in), biases zero, drawn in declaration order."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = int(np.prod(p.shape[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                p.copy_(torch.rand(p.shape, generator=gen, dtype=torch.float64)
                        .mul_(2 * bound).sub_(bound).to(p.dtype))


class ImplicitField(nn.Module):
    def __init__(self, config: NetworkConfig = NetworkConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.decoder = Decoder(config)
        self.to(config.torch_dtype)
        init_parameters(self, seed)

    @property
    def dtype(self) -> torch.dtype:
        return self.config.torch_dtype

    def as_tensor(self, x) -> torch.Tensor:
        return torch.as_tensor(np.asarray(x), dtype=self.dtype)


class QueryError(ValueError):
    pass


@dataclass
class LatentGrid:
    """Latent features ``(B, D, H, W)`` plus the cell-centre chart of each grid axis."""

    features: torch.Tensor
    t_chart: torch.Tensor
    mu_chart: torch.Tensor = field(default=None)

    def __post_init__(self):
        if self.mu_chart is None:
            self.mu_chart = self.t_chart
        h, w = self.features.shape[-2:]
        if len(self.t_chart) != h or len(self.mu_chart) != w:
            raise QueryError("chart does not match latent grid shape")
        for axis in (self.t_chart, self.mu_chart):
            if len(axis) < 2 or bool(torch.any(axis[1:] <= axis[:-1])):
                raise QueryError("degenerate latent cell: chart needs >= 2 distinct increasing sites")


def _bracket(chart: torch.Tensor, x: torch.Tensor):
    x = x.clamp(chart[0], chart[-1])
    lo = torch.searchsorted(chart, x.contiguous(), right=True) - 1
    lo = lo.clamp(0, len(chart) - 2)
    return x, lo, lo + 1


def ensemble_weights(latent: LatentGrid, coords: torch.Tensor):
    """Corner indices, area weights and offsets for query points ``coords (B, P, 2)``.

    Corner ``t`` is weighted by the area of the rectangle spanned by the query
    and the diagonally opposite corner, normalised by the cell area.
    """
    t_chart, mu_chart = latent.t_chart, latent.mu_chart
    x, i0, i1 = _bracket(t_chart, coords[..., 0])
    y, j0, j1 = _bracket(mu_chart, coords[..., 1])
    xs = (t_chart[i0], t_chart[i1])
    ys = (mu_chart[j0], mu_chart[j1])
    total = (xs[1] - xs[0]) * (ys[1] - ys[0])
    corners, weights, offsets = [], [], []
    for a, ia in ((0, i0), (1, i1)):
        for b, jb in ((0, j0), (1, j1)):
            opposite = (xs[1 - a] - x).abs() * (ys[1 - b] - y).abs()
            corners.append(ia * len(mu_chart) + jb)
            weights.append(opposite / total)
            offsets.append(torch.stack([x - xs[a], y - ys[b]], dim=-1))
    return torch.stack(corners, -1), torch.stack(weights, -1), torch.stack(offsets, -2)


def query_points(latent: LatentGrid, coords: torch.Tensor, cells: torch.Tensor,
                 decoder) -> torch.Tensor:
    """Ensemble prediction at ``coords (B, P, 2)`` with cells ``(B, P, 2)`` -> ``(B, P)``."""
    feats = latent.features
    b, d, h, w = feats.shape
    corner, weight, offset = ensemble_weights(latent, coords)
    flat = feats.reshape(b, d, h * w).transpose(1, 2)  # (B, HW, D)
    p = coords.shape[1]
    z = torch.gather(flat, 1, corner.reshape(b, p * 4, 1).expand(-1, -1, d))
    scale = torch.tensor([h, w], dtype=feats.dtype)
    out = decoder(
        z.reshape(b, p, 4, d),
        offset * scale,
        (cells * scale).unsqueeze(2).expand(-1, -1, 4, -1),
    )
    return (out * weight).sum(-1)


def encode(model: ImplicitField, packed) -> LatentGrid:
    """Packed ``(H, W, C)`` grid (or a batch ``(B, H, W, C)``) -> latent grid."""
    x = model.as_tensor(packed)
    if x.ndim == 3:
        x = x.unsqueeze(0)
    if x.ndim != 4 or x.shape[-1] != model.config.in_channels:
        raise ValueError(f"expected (..., H, W, {model.config.in_channels}) input, got {tuple(x.shape)}")
    feats = model.encoder(x.permute(0, 3, 1, 2))
    h, w = feats.shape[-2:]
    return LatentGrid(feats, model.as_tensor(cell_centers(h)), model.as_tensor(cell_centers(w)))


def query(model: ImplicitField, latent: LatentGrid, x, cell) -> float:
    coords = model.as_tensor(np.asarray(x, dtype=float).reshape(1, 1, 2))
    cells = model.as_tensor(np.asarray(cell, dtype=float).reshape(1, 1, 2))
    with torch.no_grad():
        return float(query_points(latent, coords, cells, model.decoder)[0, 0])


def predict_grid(model: ImplicitField, latent: LatentGrid, t_coords, mu_coords, cell,
                 chunk: int = 16384) -> np.ndarray:
    """Model-space prediction on the tensor-product grid ``t_coords x mu_coords``."""
    tt, mm = np.meshgrid(np.asarray(t_coords, float), np.asarray(mu_coords, float), indexing="ij")
    coords = np.stack([tt.ravel(), mm.ravel()], axis=1)
    out = np.empty(len(coords))
    cell = np.asarray(cell, dtype=float)
    with torch.no_grad():
        for s in range(0, len(coords), chunk):
            c = model.as_tensor(coords[s : s + chunk])[None]
            cl = model.as_tensor(np.tile(cell, (len(c[0]), 1)))[None]
            out[s : s + chunk] = query_points(latent, c, cl, model.decoder)[0].double().numpy()
    return out.reshape(tt.shape)
