"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence during training.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import (
    ConfigError,
    DegenerateSpectrumError,
    DimensionError,
    DivergenceError,
    ExportError,
    FormatError,
    StageError,
)
from ..nn import load_checkpoint
from ..sensitivity import model_sensitivity
from . import evaluation as ev
from .config import ExperimentConfig, HeatmapConfig, PGDConfig, load_config
from .data import gen_synthetic_freq_dataset
from .experiment import FILES, load_datasets, run_experiment
from .export import SENSITIVITY_HEADER, export_pgm, sensitivity_rows, write_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t)


def _global_flags(parser, suppress: bool) -> None:
    d = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", metavar="PATH", help="JSON experiment config", **d)
    parser.add_argument("--seed", metavar="U64", type=_u64, help="override the config seed", **d)
    parser.add_argument("--out", metavar="DIR", help="output directory", **d)
    parser.add_argument("--threads", metavar="K", type=_positive_int, help="evaluation worker threads", **d)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fourierlens", description="Fourier-sensitivity analysis, regularized training and robustness evaluation.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        return p

    add("gen-synth", "write the configured synthetic train/test splits as .npz")
    add("train", "train the configured model and run every configured evaluation")
    for name, text in [
        ("sensitivity", "Fourier-sensitivity profile (CSV) and full map (PGM) of a checkpoint"),
        ("heatmap", "Fourier-mode noise error heatmap of a checkpoint"),
        ("filter-eval", "accuracy under radial low-pass filtering"),
        ("patch-eval", "accuracy under k x k patch-shuffle"),
        ("attack-spectrum", "radial power profile of l2 PGD perturbations"),
    ]:
        p = add(name, text)
        p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint (default: OUT/model.flns)")
        if name == "sensitivity":
            p.add_argument("--samples", type=_positive_int, help="number of test samples")
        if name == "heatmap":
            p.add_argument("--epsilon", type=float, help="l2 norm of each mode perturbation")
            p.add_argument("--samples", type=_positive_int, help="number of test samples")
        if name == "filter-eval":
            p.add_argument("--radii", type=_floats, help="comma-separated radii")
        if name == "patch-eval":
            p.add_argument("--k", type=_ints, help="comma-separated grid sizes")
        if name == "attack-spectrum":
            p.add_argument("--epsilon", type=float, help="l2 budget")
            p.add_argument("--steps", type=_positive_int, help="PGD steps")
            p.add_argument("--samples", type=_positive_int, help="number of test samples")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.seed is not None:
        cfg = ExperimentConfig(seed=args.seed)
    else:
        raise ConfigError("pass --config or --seed; runs are never seeded from the clock")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_out(args.out)
    return cfg


def _checkpoint(args, out: Path):
    path = Path(args.checkpoint) if args.checkpoint else out / FILES["checkpoint"]
    if not path.exists():
        raise FileNotFoundError(f"checkpoint {path} does not exist; run 'train' first or pass --checkpoint")
    return load_checkpoint(path)


def _run(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out)
    threads = args.threads or 1
    cmd = args.command
    if cmd == "train":
        run_experiment(cfg, out, threads)
        print(f"wrote {out}")
        return EXIT_OK
    if cmd == "gen-synth":
        if cfg.data.source != "synthetic":
            raise ConfigError("gen-synth needs a synthetic data source")
        out.mkdir(parents=True, exist_ok=True)
        for split in ("train", "test"):
            synth = cfg.synth_config
            if split == "test":
                synth = replace(synth, samples_per_class=cfg.data.test_per_class)
            ds = gen_synthetic_freq_dataset(synth, split)
            np.savez(out / f"synthetic_{split}.npz", images=ds.images, labels=ds.labels, classes=ds.classes)
        print(f"wrote {out}")
        return EXIT_OK

    _, test = load_datasets(cfg)
    model = _checkpoint(args, out)
    if (model.cfg.channels, model.cfg.n) != (test.channels, test.n):
        raise DimensionError("checkpoint input shape does not match the configured dataset")
    out.mkdir(parents=True, exist_ok=True)  # only once the inputs are known to be good
    ecfg = cfg.eval
    if cmd == "sensitivity":
        count = min(args.samples or ecfg.sensitivity_samples, len(test))
        report = model_sensitivity(model, test, count, seed=cfg.seed, with_full_map=True)
        write_csv(out / FILES["sensitivity"], SENSITIVITY_HEADER, sensitivity_rows(report))
        peak = report.full_map.max()
        export_pgm(report.full_map / peak if peak > 0 else report.full_map, out / FILES["full_map"])
    elif cmd == "heatmap":
        hc = ecfg.heatmap or HeatmapConfig()
        eps = args.epsilon if args.epsilon is not None else hc.epsilon
        hm = ev.fourier_noise_heatmap(model, test, eps, args.samples or hc.n_samples, cfg.seed, threads)
        rows = [(u, v, hm.errors[u, v]) for u, v in zip(*np.nonzero(hm.evaluated))]
        write_csv(out / FILES["heatmap_csv"], ("u", "v", "error"), rows)
        export_pgm(hm.errors, out / FILES["heatmap_pgm"])
    elif cmd == "filter-eval":
        rows = ev.filter_eval(model, test, args.radii or ecfg.filter_radii)
        write_csv(out / FILES["filter"], ("r", "accuracy"), rows)
    elif cmd == "patch-eval":
        ks = args.k or ecfg.patch_k
        if any(k < 1 or test.n % k for k in ks):
            raise ConfigError(f"every k must divide the image side {test.n}")
        write_csv(out / FILES["patch"], ("k", "accuracy"), ev.patch_eval(model, test, ks, cfg.seed))
    elif cmd == "attack-spectrum":
        pc = ecfg.pgd or PGDConfig()
        eps = args.epsilon if args.epsilon is not None else pc.epsilon
        spec = ev.attack_spectrum(model, test, eps, args.steps or pc.steps, pc.step_size, args.samples or pc.n_samples, cfg.seed)
        rows = list(zip(spec.mean_profile.radii, spec.mean_profile.values))
        write_csv(out / FILES["attack"], ("k", "power"), rows)
    print(f"wrote {out}")
    return EXIT_OK


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, (FormatError, FileNotFoundError, DimensionError, DegenerateSpectrumError, ExportError)):
        return EXIT_DATA
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except Exception as exc:  # mapped to documented exit codes; anything else propagates
        code = exit_code_for(exc)
        print(f"fourierlens: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
