"""Training/evaluation pairs cut from phase diagrams.

A pair is a low-resolution input grid (randomly sub-sampled from a cropped
"sub-ground-truth") together with every point of that sub-ground-truth as a
regression target. Values are moved to model space with a logistic sigmoid;
coordinates use the cell-centre chart ``-1 + (2 i + 1) / M`` on each axis.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

from .phase_diagram import AxisGrid, PhaseDiagram, generate, read_phd, write_phd
from .spin_model import ModelParams

PLACEHOLDER = 1e-3
MANIFEST_FORMAT = "nniqs-manifest/1"


class SaturationError(ValueError):
    pass


def to_model_space(v):
    v = np.asarray(v, dtype=float)
    return expit(v)


def from_model_space(s):
    s = np.asarray(s, dtype=float)
    if np.any(~((s > 0.0) & (s < 1.0))):
        raise SaturationError("model-space values must lie strictly inside (0, 1)")
    return np.log(s) - np.log1p(-s)


def cell_centers(m: int) -> np.ndarray:
    return -1.0 + (2.0 * np.arange(m) + 1.0) / m


def pack(values: np.ndarray) -> np.ndarray:
    """(H, W) model-space grid -> (H, W, 3) network input."""
    v = np.asarray(values, dtype=float)
    out = np.full(v.shape + (3,), PLACEHOLDER)
    out[..., 0] = v
    return out


def unpack(packed: np.ndarray) -> np.ndarray:
    return np.asarray(packed)[..., 0]


class CropStrategy(str, enum.Enum):
    CONTIGUOUS = "contiguous"
    RANDOM_COORDINATES = "random"


@dataclass(frozen=True)
class CropSpec:
    strategy: CropStrategy
    side: int
    seed: int = 0


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _choose_sorted(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return np.sort(rng.choice(n, size=k, replace=False))


def crop_indices(shape: tuple[int, int], spec: CropSpec,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = shape
    if spec.side < 1 or spec.side > min(rows, cols):
        raise ValueError(f"crop side {spec.side} exceeds source {rows}x{cols}")
    rng = _rng(spec.seed) if rng is None else rng
    if CropStrategy(spec.strategy) is CropStrategy.CONTIGUOUS:
        r0 = int(rng.integers(0, rows - spec.side + 1))
        c0 = int(rng.integers(0, cols - spec.side + 1))
        return np.arange(r0, r0 + spec.side), np.arange(c0, c0 + spec.side)
    return _choose_sorted(rng, rows, spec.side), _choose_sorted(rng, cols, spec.side)


def crop(diagram: PhaseDiagram, spec: CropSpec) -> PhaseDiagram:
    rows, cols = crop_indices(diagram.values.shape, spec)
    return diagram.subgrid(rows, cols)


def downsample_indices(shape: tuple[int, int], r_i: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = shape
    if r_i < 1 or r_i > min(rows, cols):
        raise ValueError(f"cannot pick {r_i} points from a {rows}x{cols} grid")
    return _choose_sorted(rng, rows, r_i), _choose_sorted(rng, cols, r_i)


def downsample_random(diagram: PhaseDiagram, r_i: int, seed: int = 0) -> PhaseDiagram:
    rows, cols = downsample_indices(diagram.values.shape, r_i, _rng(seed))
    return diagram.subgrid(rows, cols)


@dataclass
class Sample:
    """One input/target pair.

    ``input`` is the packed (R_i, R_i, 3) grid; the encoder treats it as a
    uniform grid on the cell-centre chart regardless of which sub-ground-truth
    indices it came from (kept in ``input_index`` for provenance).
    """

    input: np.ndarray
    input_coords: tuple[np.ndarray, np.ndarray]
    target_coords: tuple[np.ndarray, np.ndarray]
    target_values: np.ndarray
    cell: tuple[float, float]
    ratio: int
    source: str = ""
    crop_rows: np.ndarray | None = None
    crop_cols: np.ndarray | None = None
    input_index: tuple[np.ndarray, np.ndarray] | None = None
    input_axes: AxisGrid | None = None
    target_axes: AxisGrid | None = None

    def targets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened (coords (P, 2), cells (P, 2), values (P,)), row-major."""
        tc, mc = self.target_coords
        tt, mm = np.meshgrid(tc, mc, indexing="ij")
        coords = np.stack([tt.ravel(), mm.ravel()], axis=1)
        cells = np.tile(np.asarray(self.cell, dtype=float), (len(coords), 1))
        return coords, cells, self.target_values.ravel()

    @property
    def input_values(self) -> np.ndarray:
        return unpack(self.input)


def make_sample(diagram: PhaseDiagram, ratio: int, r_i: int, rng: np.random.Generator,
                strategy: CropStrategy = CropStrategy.CONTIGUOUS, source: str = "") -> Sample:
    side = r_i * ratio
    rows, cols = diagram.values.shape
    if side > min(rows, cols):
        raise ValueError(f"ratio {ratio} needs a {side}-point crop, diagram is {rows}x{cols}")
    crop_r, crop_c = crop_indices((rows, cols), CropSpec(strategy, side), rng)
    sub = diagram.subgrid(crop_r, crop_c)
    in_r, in_c = downsample_indices(sub.values.shape, r_i, rng)
    truth = to_model_space(sub.values)
    return Sample(
        input=pack(truth[np.ix_(in_r, in_c)]),
        input_coords=(cell_centers(r_i), cell_centers(r_i)),
        target_coords=(cell_centers(side), cell_centers(side)),
        target_values=truth,
        cell=(2.0 / side, 2.0 / side),
        ratio=ratio,
        source=source,
        crop_rows=crop_r,
        crop_cols=crop_c,
        input_index=(in_r, in_c),
        input_axes=AxisGrid(sub.axes.t_values[in_r], sub.axes.mu_values[in_c]),
        target_axes=sub.axes,
    )


def make_pairs(diagrams: Sequence[PhaseDiagram], ratios: tuple[int, int], r_i: int,
               seed: int, count: int | None = None,
               strategy: CropStrategy = CropStrategy.CONTIGUOUS,
               names: Sequence[str] | None = None) -> Iterator[Sample]:
    """Yield pairs cycling over ``diagrams``; pair ``k`` draws from its own stream (seed, k)."""
    lo, hi = ratios
    if lo < 1 or hi < lo:
        raise ValueError(f"bad ratio range {ratios}")
    count = len(diagrams) if count is None else count
    for k in range(count):
        idx = k % len(diagrams)
        rng = _rng(seed, k)
        ratio = int(rng.integers(lo, hi + 1))
        name = names[idx] if names is not None else str(idx)
        yield make_sample(diagrams[idx], ratio, r_i, rng, strategy, name)


def split(items: Sequence, fraction: float, seed: int) -> tuple[list, list]:
    """Whole-item shuffle split; the training side gets ``floor(fraction * n)`` items."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must lie in (0, 1), got {fraction}")
    n = len(items)
    n_train = int(math.floor(fraction * n))
    if n_train == 0 or n_train == n:
        raise ValueError(f"split of {n} items at {fraction} leaves one side empty")
    order = _rng(seed).permutation(n)
    return [items[i] for i in order[:n_train]], [items[i] for i in order[n_train:]]


@dataclass
class DatasetSpec:
    n_values: tuple[int, ...] = (6, 8, 10)
    w_over_g_values: tuple[float, ...] = tuple(np.linspace(0.3, 1.5, 25).round(12))
    r_g: int = 196
    r_i: int = 48
    r_max: int = 4
    fraction: float = 0.9
    seed: int = 0
    t_min: float = 0.1
    t_max: float = 2.5
    mu_max: float = 1.4

    def __post_init__(self):
        self.n_values = tuple(int(n) for n in self.n_values)
        self.w_over_g_values = tuple(float(w) for w in self.w_over_g_values)
        if not set(self.n_values) <= {6, 8, 10}:
            raise ValueError(f"dataset N values must come from {{6, 8, 10}}, got {self.n_values}")
        for w in self.w_over_g_values:
            if not 0.3 - 1e-12 <= w <= 1.5 + 1e-12:
                raise ValueError(f"w/g={w} outside [0.3, 1.5]")
        if not self.r_i < self.r_g:
            raise ValueError("input resolution must be below the ground-truth resolution")
        if self.r_max < 2 or self.r_max > self.r_g // self.r_i:
            raise ValueError(f"r_max={self.r_max} must lie in [2, {self.r_g // self.r_i}]")

    @property
    def axes(self) -> AxisGrid:
        return AxisGrid.uniform(self.r_g, t_min=self.t_min, t_max=self.t_max, mu_max=self.mu_max)

    def to_dict(self) -> dict:
        return asdict(self)


def diagram_id(n: int, w: float) -> str:
    return f"N{n:02d}_w{w:.4f}"


@dataclass
class ManifestEntry:
    id: str
    file: str
    n_sites: int
    w_over_g: float
    split: str


@dataclass
class Manifest:
    spec: DatasetSpec
    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path = Path(".")

    def load(self, split_name: str | None = None) -> tuple[list[str], list[PhaseDiagram]]:
        chosen = [e for e in self.entries if split_name is None or e.split == split_name]
        return [e.id for e in chosen], [read_phd(self.root / e.file) for e in chosen]

    def save(self, path) -> None:
        doc = {
            "format": MANIFEST_FORMAT,
            "spec": self.spec.to_dict(),
            "entries": [asdict(e) for e in self.entries],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def read(cls, path) -> "Manifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("format") != MANIFEST_FORMAT:
            raise ValueError(f"{path}: unknown manifest format {doc.get('format')!r}")
        spec = DatasetSpec(**doc["spec"])
        entries = [ManifestEntry(**e) for e in doc["entries"]]
        return cls(spec, entries, path.parent)


def build_dataset(spec: DatasetSpec, root, threads: int = 1,
                  assign=None) -> Manifest:
    """Simulate every (N, w/g) diagram, write PHD1 files and the manifest.

    ``assign`` maps a (n, w) pair to a split name; by default a seeded
    diagram-level split at ``spec.fraction``.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    combos = [(n, w) for n in spec.n_values for w in spec.w_over_g_values]
    if assign is None:
        train, _ = split(combos, spec.fraction, spec.seed)
        train = set(train)
        assign = lambda n, w: "train" if (n, w) in train else "val"  # noqa: E731
    entries = []
    for n, w in combos:
        name = diagram_id(n, w)
        diagram = generate(ModelParams(n, w), spec.axes, threads=threads)
        write_phd(diagram, root / f"{name}.phd", note=f"dataset seed={spec.seed}")
        entries.append(ManifestEntry(name, f"{name}.phd", n, w, assign(n, w)))
    manifest = Manifest(spec, entries, root)
    manifest.save(root / "manifest.json")
    return manifest
