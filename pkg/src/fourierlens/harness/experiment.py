"""End-to-end experiment driver: data, training, sensitivity, evaluations, manifest."""

from __future__ import annotations

import contextlib
import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from .. import __version__
from .. import spectral as sp
from ..errors import ConfigError, StageError
from ..nn import Model, OptimState, build_model, save_checkpoint
from ..regularizers import EpochLog, TrainConfig, train_regularized
from ..sensitivity import model_sensitivity
from . import evaluation as ev
from .config import ExperimentConfig, validate_config
from .data import Dataset, load_cifar_binary, train_test
from .export import SENSITIVITY_HEADER, export_pgm, sensitivity_rows, write_csv

FILES = {
    "checkpoint": "model.flns",
    "training": "training.csv",
    "sensitivity": "sensitivity.csv",
    "full_map": "sensitivity_full_map.pgm",
    "metrics": "metrics.csv",
    "filter": "filter_eval.csv",
    "fourier_noise": "fourier_noise.csv",
    "heatmap_csv": "heatmap.csv",
    "heatmap_pgm": "heatmap.pgm",
    "patch": "patch_eval.csv",
    "attack": "attack_spectrum.csv",
    "manifest": "manifest.json",
}


@contextlib.contextmanager
def stage(name: str):
    """Re-raise any failure inside the block as a StageError naming the stage."""
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    d = cfg.data
    if d.source == "synthetic":
        return train_test(cfg.synth_config, d.test_per_class)
    path = Path(d.path)
    if not path.exists():
        raise FileNotFoundError(f"CIFAR batch {path} does not exist")
    data = load_cifar_binary(path, d.max_samples)
    if d.test_path is not None:
        test = load_cifar_binary(d.test_path, d.max_samples)
        return data, Dataset(test.images, test.labels, test.classes, "test", test.provenance)
    order = np.random.default_rng([cfg.seed, 2]).permutation(len(data))
    cut = len(data) - int(round(d.test_fraction * len(data)))
    return data.subset(order[:cut], "train"), data.subset(order[cut:], "test")


def training_rows(log: list[EpochLog]) -> list[tuple]:
    return [entry.row() for entry in log]


def train_model(cfg: ExperimentConfig, train: Dataset) -> tuple[Model, list[EpochLog]]:
    model = build_model(cfg.model_config)
    t = cfg.train
    tcfg = TrainConfig(
        epochs=t.epochs,
        batch_size=t.batch_size,
        seed=cfg.seed,
        probe_size=t.probe_size,
        gaussian_sigma=t.gaussian_sigma,
        augment=t.augment,
        log_every=t.log_every,
    )
    optim = OptimState(lr=cfg.optim.lr, momentum=cfg.optim.momentum, weight_decay=cfg.optim.weight_decay)
    return train_regularized(model, train, cfg.regularizer, optim, tcfg)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> Path:
    """Run the configured protocol and write every artifact into ``out_dir``.

    Reruns with an equal config produce byte-identical CSV files.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    with stage("setup"):
        if threads < 1:
            raise ConfigError("threads must be >= 1")
        validate_config(cfg)
        out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in FILES.items()}
    written = []
    metrics: list[tuple[str, float]] = []
    ecfg = cfg.eval

    with stage("data"):
        train, test = load_datasets(cfg)
    with stage("train"):
        model, log = train_model(cfg, train)
        written.append(write_csv(paths["training"], EpochLog.FIELDS, training_rows(log)))
    with stage("checkpoint"):
        save_checkpoint(model, paths["checkpoint"])
        written.append(paths["checkpoint"])
    with stage("accuracy"):
        metrics.append(("train_accuracy", model.accuracy(train.images, train.labels)))
        metrics.append(("test_accuracy", model.accuracy(test.images, test.labels)))
    with stage("sensitivity"):
        count = min(ecfg.sensitivity_samples, len(test))
        report = model_sensitivity(model, test, count, seed=cfg.seed, with_full_map=True)
        written.append(write_csv(paths["sensitivity"], SENSITIVITY_HEADER, sensitivity_rows(report)))
        # scaled by its maximum so the map is viewable
        fmap = report.full_map
        peak = fmap.max()
        written.append(export_pgm(fmap / peak if peak > 0 else fmap, paths["full_map"]))
        low, mid, high = report.band_masses(test.n)
        inner = report.mean.values[: test.n // 2]
        metrics += [
            ("low_mass", low),
            ("mid_mass", mid),
            ("high_mass", high),
            ("inscribed_entropy", sp.profile_entropy(inner / inner.sum())),
            ("sensitivity_skipped", report.n_skipped),
        ]
    with stage("filter-eval"):
        written.append(write_csv(paths["filter"], ("r", "accuracy"), ev.filter_eval(model, test, ecfg.filter_radii)))
    if ecfg.fourier_noise_eps:
        with stage("fourier-noise"):
            n_hm = ecfg.heatmap.n_samples if ecfg.heatmap else None
            rows, _ = ev.fourier_noise_eval(model, test, ecfg.fourier_noise_eps, n_hm, cfg.seed, threads)
            written.append(write_csv(paths["fourier_noise"], ("epsilon", "k", "error"), rows))
    if ecfg.heatmap is not None:
        with stage("heatmap"):
            hm = ev.fourier_noise_heatmap(model, test, ecfg.heatmap.epsilon, ecfg.heatmap.n_samples, cfg.seed, threads)
            rows = [(u, v, hm.errors[u, v]) for u, v in zip(*np.nonzero(hm.evaluated))]
            written.append(write_csv(paths["heatmap_csv"], ("u", "v", "error"), rows))
            written.append(export_pgm(hm.errors, paths["heatmap_pgm"]))
            density = ev.sensitivity_density(report.mean.values, test.n)
            metrics.append(("heatmap_alignment", ev.rank_alignment(hm.per_radius(), density)))
    with stage("patch-eval"):
        written.append(write_csv(paths["patch"], ("k", "accuracy"), ev.patch_eval(model, test, ecfg.patch_k, cfg.seed)))
    if ecfg.pgd is not None:
        with stage("attack-spectrum"):
            p = ecfg.pgd
            spec = ev.attack_spectrum(model, test, p.epsilon, p.steps, p.step_size, p.n_samples, cfg.seed)
            rows = [(k, v) for k, v in zip(spec.mean_profile.radii, spec.mean_profile.values)]
            written.append(write_csv(paths["attack"], ("k", "power"), rows))
            metrics += [("attack_low_mass", spec.low_mass(test.n)), ("attack_success", spec.success_rate)]
    with stage("metrics"):
        written.append(write_csv(paths["metrics"], ("name", "value"), metrics))
    with stage("manifest"):
        manifest = {
            "config_hash": cfg.config_hash(),
            "config": cfg.to_dict(),
            "versions": {
                "fourierlens": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "model_fingerprint": model.fingerprint(),
            "files": {p.name: _sha256(p) for p in written},
        }
        paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out
