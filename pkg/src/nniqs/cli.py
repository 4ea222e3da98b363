"""Command-line pipeline: simulate, theory, dataset, train, predict, baseline, evaluate.

Every subcommand writes ``config.json`` (the fully resolved arguments) next to
its outputs. Failures print one ``error kind=<kind> exit=<code> message=<json>``
line on stderr and exit with the code of their kind.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

ENV_PREFIX = "NNIQS_"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_IO = 4
EXIT_FORMAT = 5
EXIT_NUMERIC = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(text).replace(",", " ").split())


def _common(p: argparse.ArgumentParser, out: bool = True, threads: bool = False, seed: bool = False):
    if out:
        p.add_argument("--out", default=".", help="output directory")
    if threads:
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _axes_flags(p: argparse.ArgumentParser, grid_default: int):
    p.add_argument("--grid", type=int, default=grid_default, help="points per axis")
    p.add_argument("--t-min", type=float, default=0.1)
    p.add_argument("--t-max", type=float, default=2.5)
    p.add_argument("--mu-max", type=float, default=1.4)


def build_parser() -> argparse.ArgumentParser:
    from .evaluation import METHODS, SCENARIOS

    parser = _Parser(prog="nniqs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="exact thermal condensate grid -> PHD1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--w-over-g", type=float, required=True)
    p.add_argument("--m-over-g", type=float, default=0.0)
    _axes_flags(p, 48)
    p.add_argument("--name", default=None, help="output file stem")
    _common(p, threads=True)

    p = sub.add_parser("theory", help="continuum condensate along T -> CSV")
    _axes_flags(p, 48)
    _common(p)

    p = sub.add_parser("dataset", help="simulate a dataset -> manifest + PHD1 files")
    p.add_argument("--n", type=_ints, default=(6, 8, 10), help="N values, e.g. '6,8,10'")
    p.add_argument("--w-over-g", type=_floats, default=None, help="explicit w/g list")
    p.add_argument("--w-count", type=int, default=25, help="evenly spaced w/g values in [0.3, 1.5]")
    _axes_flags(p, 196)
    p.add_argument("--input-grid", type=int, default=48)
    p.add_argument("--r-max", type=int, default=None)
    p.add_argument("--fraction", type=float, default=0.9)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="basic")
    _common(p, threads=True, seed=True)

    p = sub.add_parser("train", help="manifest -> IQS1 checkpoint + history CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--milestones", type=_ints, default=None,
                   help="lr halving epochs; default 1/5, 2/5, 3/5, 4/5 of --epochs")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--pairs-per-diagram", type=int, default=1)
    p.add_argument("--sample-q", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=64)
    p.add_argument("--resblocks", type=int, default=8)
    p.add_argument("--hidden", type=_ints, default=(256,) * 5)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    _common(p, threads=True, seed=True)

    p = sub.add_parser("predict", help="IQS1 + input PHD1 -> upscaled PHD1")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    _target_flags(p)
    _common(p)

    p = sub.add_parser("baseline", help="classical interpolation of an input PHD1")
    p.add_argument("--method", choices=METHODS[1:], default="bilinear")
    p.add_argument("--input", required=True)
    _target_flags(p)
    _common(p)

    p = sub.add_parser("evaluate", help="relative-error reports")
    p.add_argument("--truth", nargs="+", required=True, help="ground-truth PHD1 file(s)")
    p.add_argument("--pred", default=None, help="prediction PHD1 on the truth grid")
    p.add_argument("--checkpoint", default=None,
                   help="run the random-coordinate protocol with this model instead of --pred")
    p.add_argument("--method", choices=METHODS, default=None,
                   help="label for --pred, or restrict the protocol to one method")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="basic")
    p.add_argument("--ratio", type=_ints, default=None, help="ratios, default from the scenario")
    p.add_argument("--input-grid", type=int, default=48)
    p.add_argument("--pairs", type=int, default=1, help="pairs per diagram and ratio")
    _common(p, threads=True, seed=True)
    return parser


def _target_flags(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--ratio", type=int, help="points-per-axis factor inside the input hull")
    g.add_argument("--target", help="PHD1 file whose axes define the target grid")


def _apply_env(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """NNIQS_<FLAG> variables become defaults; explicit flags still win."""
    command = next((a for a in argv if not a.startswith("-")), None)
    subs = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    targets = [parser] + ([subs[0].choices[command]] if subs and command in subs[0].choices else [])
    for p in targets:
        for action in p._actions:
            if not action.option_strings or action.dest in ("help", "version"):
                continue
            key = ENV_PREFIX + action.dest.upper()
            if key in os.environ:
                raw = os.environ[key]
                if action.nargs in ("+", "*"):
                    action.default = raw.split()
                elif action.type is not None:
                    action.default = action.type(raw)
                elif action.const is not None and action.nargs == 0:
                    action.default = raw.lower() in ("1", "true", "yes")
                else:
                    action.default = raw
                action.required = False


def _echo(args: argparse.Namespace, out: Path, extra: dict | None = None) -> None:
    doc = {"nniqs_version": __version__}
    doc.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items()})
    if extra:
        doc.update(extra)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _axes(args):
    from .phase_diagram import AxisGrid

    return AxisGrid.uniform(args.grid, t_min=args.t_min, t_max=args.t_max, mu_max=args.mu_max)


def cmd_simulate(args, out: Path) -> dict:
    from .dataset import diagram_id
    from .phase_diagram import generate, write_phd
    from .spin_model import ModelParams

    params = ModelParams(args.n, args.w_over_g, 0.0, args.m_over_g)
    diagram = generate(params, _axes(args), threads=args.threads)
    name = args.name or f"{diagram_id(args.n, args.w_over_g)}_R{args.grid}"
    path = out / f"{name}.phd"
    write_phd(diagram, path, note="simulate")
    return {"outputs": [path.name]}


def cmd_theory(args, out: Path) -> dict:
    from .phase_diagram import analytic_condensate

    t = _axes(args).t_values
    values = analytic_condensate(t)
    path = out / "theory.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_over_g", "condensate"])
        for x, v in zip(t, values):
            w.writerow([repr(float(x)), repr(float(v))])
    return {"outputs": [path.name]}


def cmd_dataset(args, out: Path) -> dict:
    from .dataset import DatasetSpec, build_dataset, split
    from .evaluation import SCENARIOS

    scenario = SCENARIOS[args.scenario]
    if scenario.name == "largen":
        raise ValueError("the large-N scenario uses a single diagram: run simulate --n 12")
    ws = args.w_over_g if args.w_over_g else tuple(np.linspace(0.3, 1.5, args.w_count).round(12))
    grid = scenario.r_g if scenario.name == "beyond" and args.grid == 196 else args.grid
    r_max = args.r_max if args.r_max is not None else min(4, grid // args.input_grid)
    spec = DatasetSpec(args.n, ws, grid, args.input_grid, r_max, args.fraction, args.seed,
                       args.t_min, args.t_max, args.mu_max)
    assign = None
    if scenario.name == "beyond":
        assign = lambda n, w: "test"  # noqa: E731
    elif scenario.train_w is not None:
        inside = [(n, w) for n in spec.n_values for w in spec.w_over_g_values
                  if scenario.in_training_range(w)]
        train, _ = split(inside, spec.fraction, spec.seed)
        train = set(train)

        def assign(n, w):
            if not scenario.in_training_range(w):
                return "test"
            return "train" if (n, w) in train else "val"

    manifest = build_dataset(spec, out, threads=args.threads, assign=assign)
    counts = {}
    for e in manifest.entries:
        counts[e.split] = counts.get(e.split, 0) + 1
    return {"outputs": ["manifest.json"] + [e.file for e in manifest.entries], "splits": counts}


def _default_milestones(epochs: int) -> tuple[int, ...]:
    if epochs < 5:
        return ()
    return tuple(epochs * k // 5 for k in range(1, 5))


def cmd_train(args, out: Path) -> dict:
    import torch

    from .dataset import Manifest
    from .network import ImplicitField, NetworkConfig
    from .training import TrainingConfig, fit_normalization, save_checkpoint, train

    torch.set_num_threads(max(1, args.threads))
    manifest = Manifest.read(args.manifest)
    _, train_set = manifest.load("train")
    _, val_set = manifest.load("val")
    spec = manifest.spec
    milestones = args.milestones if args.milestones is not None else _default_milestones(args.epochs)
    config = TrainingConfig(epochs=args.epochs, lr=args.lr, milestones=milestones, gamma=args.gamma,
                            batch_size=args.batch_size, seed=args.seed, r_i=spec.r_i,
                            ratio_range=(1, spec.r_max), pairs_per_diagram=args.pairs_per_diagram,
                            sample_q=args.sample_q, val_ratios=tuple(range(2, spec.r_max + 1)))
    shift, scale = fit_normalization(train_set)
    net = NetworkConfig(latent_dim=args.latent_dim, n_resblocks=args.resblocks, hidden=args.hidden,
                        dtype=args.dtype, value_shift=shift, value_scale=scale)
    model = ImplicitField(net, seed=args.seed)
    history = train(model, config, train_set, val_set)
    save_checkpoint(model, out / "checkpoint.iqs",
                    meta={"training": config.to_dict(), "dataset": spec.to_dict()})
    history.write_csv(out / "history.csv")
    return {"outputs": ["checkpoint.iqs", "history.csv"], "network": net.to_dict(),
            "training": config.to_dict(), "final_train_l1": history.final_train_l1}


def target_axes(source, ratio: int | None = None, target_path=None):
    """Target axes: a ``ratio``-times denser grid spanning the input hull, or a file's axes."""
    from .phase_diagram import AxisGrid, read_phd

    if target_path is not None:
        return read_phd(target_path).axes
    if ratio is None or ratio < 1:
        raise ValueError("ratio must be a positive integer")
    t, mu = source.axes.t_values, source.axes.mu_values
    return AxisGrid(np.linspace(t[0], t[-1], (len(t) - 1) * ratio + 1),
                    np.linspace(mu[0], mu[-1], (len(mu) - 1) * ratio + 1))


def _chart(source_axis: np.ndarray, target_axis: np.ndarray) -> np.ndarray:
    """Affine map sending the first/last input nodes to their cell-centre chart positions."""
    from .dataset import cell_centers

    m = len(source_axis)
    if m < 2:
        raise ValueError("an input axis needs at least two points")
    c = cell_centers(m)
    return c[0] + (target_axis - source_axis[0]) * (c[-1] - c[0]) / (source_axis[-1] - source_axis[0])


def predict_diagram(model, source, axes):
    """Network upscaling of a physical-unit diagram onto ``axes``.

    The input grid is presented on the uniform cell-centre chart and targets are
    mapped there affinely from the input's end nodes; the cell is the target
    spacing in that chart.
    """
    from .dataset import pack, from_model_space, to_model_space
    from .network import encode, predict_grid
    from .phase_diagram import PhaseDiagram
    import torch

    tc = _chart(source.axes.t_values, axes.t_values)
    mc = _chart(source.axes.mu_values, axes.mu_values)
    cell = (_spacing(tc), _spacing(mc))
    with torch.no_grad():
        latent = encode(model, pack(to_model_space(source.values)))
        pred = predict_grid(model, latent, tc, mc, cell)
    return PhaseDiagram(source.params, axes, from_model_space(pred), source.generator_version)


def _spacing(chart: np.ndarray) -> float:
    return float(np.mean(np.diff(chart))) if len(chart) > 1 else 2.0


def baseline_diagram(source, axes, method):
    from .baselines import upscale_grid
    from .dataset import from_model_space, to_model_space
    from .phase_diagram import PhaseDiagram

    pred = upscale_grid(to_model_space(source.values), source.axes.t_values,
                        source.axes.mu_values, method, axes.t_values, axes.mu_values)
    return PhaseDiagram(source.params, axes, from_model_space(pred), source.generator_version)


def cmd_predict(args, out: Path) -> dict:
    from .phase_diagram import read_phd, write_phd
    from .training import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    source = read_phd(args.input)
    result = predict_diagram(model, source, target_axes(source, args.ratio, args.target))
    path = out / "prediction.phd"
    write_phd(result, path, note="nniqs prediction")
    return {"outputs": [path.name]}


def cmd_baseline(args, out: Path) -> dict:
    from .phase_diagram import read_phd, write_phd

    source = read_phd(args.input)
    result = baseline_diagram(source, target_axes(source, args.ratio, args.target), args.method)
    path = out / f"{args.method}.phd"
    write_phd(result, path, note=f"{args.method} interpolation")
    return {"outputs": [path.name]}


def cmd_evaluate(args, out: Path) -> dict:
    from .evaluation import METHODS, SCENARIOS, evaluate_diagrams
    from .metrics import region_stats, relative_error_physical, write_error_csv, write_summary_json
    from .phase_diagram import minmax_normalize, read_phd, transition_mask

    scenario = SCENARIOS[args.scenario]
    truths = [read_phd(p) for p in args.truth]
    if args.pred is not None:
        if len(truths) != 1:
            raise ValueError("--pred compares against exactly one --truth file")
        truth, pred = truths[0], read_phd(args.pred)
        if pred.values.shape != truth.values.shape or not (
                np.allclose(pred.axes.t_values, truth.axes.t_values)
                and np.allclose(pred.axes.mu_values, truth.axes.mu_values)):
            raise ValueError("prediction and truth grids differ")
        err = relative_error_physical(pred.values, truth.values)
        mask = transition_mask(minmax_normalize(truth.values))
        tag = scenario.tag
        method = args.method or ""
        reports = [region_stats(err, None, tag, "whole", method=method)]
        if mask.any():
            reports.append(region_stats(err, mask, tag, "transition", method=method))
        write_error_csv(out / "errors.csv", err, truth.axes.t_values, truth.axes.mu_values)
        write_summary_json(out / "summary.json", reports, {"scenario": scenario.to_dict()})
        return {"outputs": ["errors.csv", "summary.json"]}

    model = None
    methods = METHODS if args.method is None else (args.method,)
    if args.checkpoint is not None:
        import torch

        from .training import load_checkpoint

        torch.set_num_threads(max(1, args.threads))
        model, _ = load_checkpoint(args.checkpoint)
    else:
        methods = tuple(m for m in methods if m != "nniqs")
        if not methods:
            raise ValueError("the nniqs method needs --checkpoint")
    ratios = args.ratio or scenario.ratios
    reports = evaluate_diagrams(truths, ratios, args.input_grid, methods, model, args.seed,
                                args.pairs, scenario.tag, [Path(p).stem for p in args.truth])
    write_summary_json(out / "summary.json", reports, {"scenario": scenario.to_dict()})
    return {"outputs": ["summary.json"]}


COMMANDS = {
    "simulate": cmd_simulate,
    "theory": cmd_theory,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "predict": cmd_predict,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
}


def _classify(exc: BaseException) -> tuple[str, int]:
    from .phase_diagram import FormatError
    from .quadrature import QuadratureError
    from .thermal import DiagonalizationError
    from .training import CheckpointError, TrainingDiverged

    if isinstance(exc, UsageError):
        return "usage", EXIT_USAGE
    if isinstance(exc, (FormatError, CheckpointError, json.JSONDecodeError)):
        return "format", EXIT_FORMAT
    if isinstance(exc, (DiagonalizationError, QuadratureError, TrainingDiverged)):
        return "numeric", EXIT_NUMERIC
    if isinstance(exc, OSError):
        return "io", EXIT_IO
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return "invalid", EXIT_INVALID
    raise exc


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        _apply_env(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, out)
        _echo(args, out, extra)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        kind, code = _classify(exc)
        print(f"error kind={kind} exit={code} message={json.dumps(str(exc))}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
