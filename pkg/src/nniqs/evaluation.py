"""Test-stage protocols: random-coordinate pairs, baseline and network predictions
on the same pair, relative-error reports, and the four scenario presets."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .baselines import InterpolationMethod, upscale_grid
from .dataset import CropStrategy, Sample, make_sample
from .metrics import ErrorReport, RelativeError, pooled_stats, relative_error_map
from .phase_diagram import PhaseDiagram, minmax_normalize, transition_mask

NNIQS = "nniqs"
METHODS = (NNIQS,) + tuple(m.value for m in InterpolationMethod)


@dataclass(frozen=True)
class Scenario:
    name: str
    r_g: int
    ratios: tuple[int, ...]
    n_values: tuple[int, ...]
    # closed w/g interval used for training; None trains on the full range
    train_w: tuple[float, float] | None = None
    tag: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def in_training_range(self, w: float) -> bool:
        if self.train_w is None:
            return True
        lo, hi = self.train_w
        return lo - 1e-12 <= w <= hi + 1e-12


SCENARIOS = {
    "basic": Scenario("basic", 196, (2, 3, 4), (6, 8, 10), tag="in-range"),
    "beyond": Scenario("beyond", 480, (6, 8, 10), (6, 8, 10), tag="beyond-ratio"),
    "unseenw": Scenario("unseenw", 196, (2, 3, 4), (6, 8, 10), train_w=(0.5, 1.3), tag="unseen-w"),
    "largen": Scenario("largen", 196, (2, 3, 4), (12,), tag="large-N"),
}


def random_pair(diagram: PhaseDiagram, ratio: int, r_i: int, seed: int, index: int = 0,
                source: str = "") -> Sample:
    """Random-coordinate crop of side ``r_i * ratio`` plus a random ``r_i`` down-sample."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(ratio), int(index)]))
    return make_sample(diagram, ratio, r_i, rng, CropStrategy.RANDOM_COORDINATES, source)


def baseline_on_pair(sample: Sample, method) -> np.ndarray:
    """Classical upscaling of the pair input onto its targets.

    The interpolator sees exactly what the network sees: input nodes on the
    uniform cell-centre chart. Targets beyond the outermost input nodes are
    clamped to the hull, which amounts to constant extension at the edges.
    """
    (it, im), (tt, tm) = sample.input_coords, sample.target_coords
    t = np.clip(tt, it[0], it[-1])
    m = np.clip(tm, im[0], im[-1])
    return upscale_grid(sample.input_values, it, im, method, t, m)


def predict_on_pair(sample: Sample, method, model=None) -> np.ndarray:
    if str(getattr(method, "value", method)) == NNIQS:
        if model is None:
            raise ValueError("the nniqs method needs a trained model")
        from .training import predict_sample

        return predict_sample(model, sample)
    return baseline_on_pair(sample, method)


def pair_transition_mask(diagram: PhaseDiagram, sample: Sample) -> np.ndarray:
    """Transition band of the full diagram, restricted to the pair's targets."""
    band = transition_mask(minmax_normalize(diagram.values))
    return band[np.ix_(sample.crop_rows, sample.crop_cols)]


@dataclass
class PairResult:
    sample: Sample
    mask: np.ndarray
    errors: dict[str, RelativeError] = field(default_factory=dict)
    predictions: dict[str, np.ndarray] = field(default_factory=dict)


def evaluate_pair(diagram: PhaseDiagram, sample: Sample, methods: Sequence[str],
                  model=None) -> PairResult:
    out = PairResult(sample, pair_transition_mask(diagram, sample))
    for m in methods:
        pred = predict_on_pair(sample, m, model)
        out.predictions[m] = pred
        out.errors[m] = relative_error_map(pred, sample.target_values)
    return out


def summarize(results: Sequence[PairResult], method: str, region: str, scenario: str,
              ratio: int) -> ErrorReport:
    """Pool the maps of ``results`` and apply the trimmed statistics."""
    errs = [r.errors[method] for r in results]
    masks = [r.mask if region == "transition" else None for r in results]
    if region == "transition":
        keep = [i for i, m in enumerate(masks) if m.any()]
        if not keep:
            raise ValueError("no transition-region points in any pair")
        errs, masks = [errs[i] for i in keep], [masks[i] for i in keep]
    return pooled_stats(errs, masks, scenario=scenario, region=region, method=method, ratio=ratio)


def evaluate_diagrams(diagrams: Sequence[PhaseDiagram], ratios: Sequence[int], r_i: int,
                      methods: Sequence[str] = METHODS, model=None, seed: int = 0,
                      pairs_per_diagram: int = 1, scenario: str = "",
                      names: Sequence[str] | None = None) -> list[ErrorReport]:
    """Whole and transition reports per (ratio, method) over random-coordinate pairs."""
    reports = []
    for ratio in ratios:
        results = []
        for d_idx, d in enumerate(diagrams):
            for k in range(pairs_per_diagram):
                name = names[d_idx] if names is not None else str(d_idx)
                pair = random_pair(d, ratio, r_i, seed, d_idx * pairs_per_diagram + k, name)
                results.append(evaluate_pair(d, pair, methods, model))
        tag = f"{scenario} x{ratio}" if scenario else f"x{ratio}"
        for m in methods:
            reports.append(summarize(results, m, "whole", tag, ratio))
            if any(r.mask.any() for r in results):
                reports.append(summarize(results, m, "transition", tag, ratio))
    return reports


def find_report(reports: Sequence[ErrorReport], method: str, ratio: int,
                region: str = "whole") -> ErrorReport:
    for r in reports:
        if r.method == method and r.ratio == ratio and r.region == region:
            return r
    raise KeyError(f"no report for {method} x{ratio} {region}")
