"""Joint training of encoder and decoder, training history, and IQS1 checkpoints."""
from __future__ import annotations

import csv
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .dataset import CropStrategy, Sample, make_pairs
from .metrics import psnr
from .network import ImplicitField, LatentGrid, NetworkConfig, encode, query_points
from .phase_diagram import PhaseDiagram

log = logging.getLogger(__name__)

CKPT_MAGIC = b"IQS1"
CKPT_VERSION = 1


@dataclass
class TrainingConfig:
    epochs: int = 1000
    lr: float = 1e-5
    milestones: tuple[int, ...] = (200, 400, 600, 800)
    gamma: float = 0.5
    batch_size: int = 16
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    r_i: int = 48
    ratio_range: tuple[int, int] = (1, 4)
    pairs_per_diagram: int = 1
    # None decodes every target point; an int subsamples that many per pair
    sample_q: int | None = None
    val_ratios: tuple[int, ...] = (2, 3, 4)
    val_pairs_per_ratio: int = 1

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        self.betas = tuple(float(b) for b in self.betas)
        self.ratio_range = tuple(int(r) for r in self.ratio_range)
        self.val_ratios = tuple(int(r) for r in self.val_ratios)
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError("milestones must be strictly increasing")
        if self.milestones and self.epochs and self.milestones[-1] >= self.epochs:
            raise ValueError("milestones must lie below the epoch count")
        if self.batch_size < 1 or self.pairs_per_diagram < 1:
            raise ValueError("batch size and pairs per diagram must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_l1: float
    val_l1: float
    val_psnr: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)

    @property
    def initial_train_l1(self) -> float:
        return self.records[0].train_l1

    @property
    def final_train_l1(self) -> float:
        return self.records[-1].train_l1

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_l1", "val_l1", "val_psnr"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_l1), repr(r.val_l1), repr(r.val_psnr)])

    @classmethod
    def read_csv(cls, path) -> "History":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([EpochRecord(int(r["epoch"]), float(r["train_l1"]), float(r["val_l1"]),
                                float(r["val_psnr"])) for r in rows])


class TrainingDiverged(RuntimeError):
    pass


def _seed(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _batch_inputs(model: ImplicitField, samples: Sequence[Sample]) -> torch.Tensor:
    return model.as_tensor(np.stack([s.input for s in samples]))


def _targets(model, sample: Sample, sample_q, rng):
    coords, cells, values = sample.targets()
    if sample_q is not None and sample_q < len(values):
        pick = np.sort(rng.choice(len(values), size=sample_q, replace=False))
        coords, cells, values = coords[pick], cells[pick], values[pick]
    return model.as_tensor(coords)[None], model.as_tensor(cells)[None], model.as_tensor(values)


def batch_loss(model: ImplicitField, samples: Sequence[Sample], sample_q=None,
               rng: np.random.Generator | None = None) -> torch.Tensor:
    """Mean over pairs of the per-pair mean absolute error in model space."""
    feats = encode(model, np.stack([s.input for s in samples]))
    losses = []
    for b, s in enumerate(samples):
        latent = LatentGrid(feats.features[b : b + 1], feats.t_chart, feats.mu_chart)
        coords, cells, values = _targets(model, s, sample_q, rng)
        pred = query_points(latent, coords, cells, model.decoder)[0]
        losses.append((pred - values).abs().mean())
    return torch.stack(losses).mean()


def predict_sample(model: ImplicitField, sample: Sample, chunk: int = 16384) -> np.ndarray:
    """Model-space prediction on every target point of ``sample``."""
    from .network import predict_grid

    with torch.no_grad():
        latent = encode(model, sample.input)
        return predict_grid(model, latent, *sample.target_coords, sample.cell, chunk)


def evaluate_pairs(model: ImplicitField, samples: Sequence[Sample]) -> tuple[float, float]:
    """(mean L1, mean PSNR) over ``samples`` with full-grid predictions."""
    if not samples:
        return float("nan"), float("nan")
    l1, db = [], []
    for s in samples:
        pred = predict_sample(model, s)
        l1.append(float(np.abs(pred - s.target_values).mean()))
        db.append(psnr(pred, s.target_values))
    return float(np.mean(l1)), float(np.mean(db))


def validation_pairs(diagrams: Sequence[PhaseDiagram], config: TrainingConfig,
                     names: Sequence[str] | None = None) -> list[Sample]:
    out = []
    for r in config.val_ratios:
        out += list(make_pairs(diagrams, (r, r), config.r_i, seed=config.seed + 7919 * r,
                               count=len(diagrams) * config.val_pairs_per_ratio,
                               strategy=CropStrategy.CONTIGUOUS, names=names))
    return out


def epoch_pairs(diagrams, config: TrainingConfig, epoch: int, names=None) -> list[Sample]:
    pairs = list(make_pairs(diagrams, config.ratio_range, config.r_i,
                            seed=int(_seed(config.seed, epoch, 1).integers(2**31)),
                            count=len(diagrams) * config.pairs_per_diagram,
                            strategy=CropStrategy.CONTIGUOUS, names=names))
    order = _seed(config.seed, epoch, 2).permutation(len(pairs))
    return [pairs[i] for i in order]


def _check_finite(model: ImplicitField, where: str) -> None:
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise TrainingDiverged(f"non-finite parameter {name} after {where}")


def train(model: ImplicitField, config: TrainingConfig, train_set: Sequence[PhaseDiagram],
          val_set: Sequence[PhaseDiagram], progress=None) -> History:
    """Optimise encoder and decoder jointly with Adam on the L1 loss.

    Row 0 of the returned history scores the untouched initial model.
    """
    if not train_set:
        raise ValueError("training set is empty")
    if not val_set:
        raise ValueError("validation set is empty")
    val_pairs = validation_pairs(val_set, config)
    history = History()

    with torch.no_grad():
        first = epoch_pairs(train_set, config, 1)
        init_losses = [float(batch_loss(model, first[s : s + config.batch_size], config.sample_q,
                                        _seed(config.seed, 0, s)))
                       for s in range(0, len(first), config.batch_size)]
    history.records.append(EpochRecord(0, float(np.mean(init_losses)), *evaluate_pairs(model, val_pairs)))
    if config.epochs == 0:
        return history

    opt = torch.optim.Adam(model.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)
    sched = torch.optim.lr_scheduler.MultiStepLR(opt, milestones=list(config.milestones),
                                                 gamma=config.gamma)
    for epoch in range(1, config.epochs + 1):
        pairs = epoch_pairs(train_set, config, epoch)
        losses = []
        for b, start in enumerate(range(0, len(pairs), config.batch_size)):
            batch = pairs[start : start + config.batch_size]
            if not batch:
                raise ValueError("empty batch")
            loss = batch_loss(model, batch, config.sample_q, _seed(config.seed, epoch, 3, b))
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch {b}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            _check_finite(model, f"epoch {epoch}, batch {b}")
            losses.append(value)
        sched.step()
        rec = EpochRecord(epoch, float(np.mean(losses)), *evaluate_pairs(model, val_pairs))
        history.records.append(rec)
        log.info("epoch %d train_l1=%.3e val_l1=%.3e val_psnr=%.2f", rec.epoch,
                 rec.train_l1, rec.val_l1, rec.val_psnr)
        if progress is not None:
            progress(rec)
    return history


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: ImplicitField, path, meta: dict | None = None) -> None:
    state = model.state_dict()
    header = {
        "architecture": model.config.to_dict(),
        "tensors": [[name, list(t.shape)] for name, t in state.items()],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for t in state.values():
            fh.write(t.detach().to(torch.float64).contiguous().numpy().astype("<f8").tobytes())


def load_checkpoint(path, expected: NetworkConfig | None = None) -> tuple[ImplicitField, dict]:
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
    version, n = struct.unpack("<II", data[4:12])
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[12 : 12 + n].decode("utf-8"))
        arch = header["architecture"]
        config = NetworkConfig(**arch)
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from exc
    if expected is not None and config != expected:
        raise CheckpointError(f"{path}: architecture {config} does not match expected {expected}")
    model = ImplicitField(config)
    state = model.state_dict()
    declared = [(name, tuple(shape)) for name, shape in header["tensors"]]
    actual = [(name, tuple(t.shape)) for name, t in state.items()]
    if declared != actual:
        raise CheckpointError(f"{path}: tensor layout does not match architecture")
    offset = 12 + n
    total = sum(int(np.prod(s)) for _, s in declared)
    if len(data) - offset != 8 * total:
        raise CheckpointError(f"{path}: payload size mismatch")
    flat = np.frombuffer(data, dtype="<f8", offset=offset)
    pos = 0
    new_state = {}
    for name, shape in declared:
        k = int(np.prod(shape))
        new_state[name] = torch.from_numpy(flat[pos : pos + k].reshape(shape).copy()).to(config.torch_dtype)
        pos += k
    model.load_state_dict(new_state)
    return model, header.get("meta", {})


def fit_normalization(diagrams: Sequence[PhaseDiagram]) -> tuple[float, float]:
    """Mean and standard deviation of the model-space values of ``diagrams``."""
    from .dataset import to_model_space

    values = np.concatenate([to_model_space(d.values).ravel() for d in diagrams])
    std = float(values.std())
    return float(values.mean()), std if std > 0 else 1.0
