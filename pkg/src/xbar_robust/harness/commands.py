"""Subcommand implementations: each emits CSV artifacts plus summary.json.

Every artifact embeds the resolved config, its hash, the seed, and the
schema version, so a re-run with the same config+seed reproduces the
outputs (bit-exactly on float paths, to solver tolerance on nodal
paths).
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .. import __version__
from ..adv import AttackConfig, TrainConfig, adversarial_train, vanilla_train
from ..errors import ConfigError
from ..mapper import Backend
from ..metrics import (
    collect_traces,
    evaluate_accuracy,
    layer_noise_report,
    robustness_curve,
)
from ..nn import build_model, load_checkpoint, save_checkpoint
from ..xbar.config import CrossbarConfig
from ..xbar.nf import calibrate_r_wire, nodal_nf
from ..xbar.surrogate import (
    fit_surrogate,
    generate_surrogate_dataset,
    surrogate_mvm,
)
from ..xbar.nf import compute_nf
from .config import ExperimentConfig
from .datasets import load_cifar, make_synthetic, subset

SCHEMA_VERSION = 1
NF_SAMPLING_NOTE = "V ~ U[0, v_max], G ~ U[g_min, g_max], tau = 1e-12 A"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header + ["schema_version"])
        for row in rows:
            w.writerow(list(row) + [SCHEMA_VERSION])


def _write_summary(cfg: ExperimentConfig, command: str, results: dict):
    path = os.path.join(cfg.out_dir, "summary.json")
    blob = {
        "command": command,
        "package_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "nf_sampling": NF_SAMPLING_NOTE,
        "results": results,
    }
    with open(path, "w") as f:
        json.dump(blob, f, indent=2, sort_keys=True)
    return path


def _split_seed(seed: int, which: str) -> int:
    return seed * 2 + (0 if which == "train" else 1)


def load_dataset(cfg: ExperimentConfig, which: str):
    if cfg.dataset == "synthetic":
        count = cfg.train_count if which == "train" else cfg.test_count
        return make_synthetic(cfg.classes, count, _split_seed(cfg.seed, which),
                              margin=cfg.margin, noise=cfg.noise,
                              jitter=cfg.jitter, split=which,
                              template_seed=cfg.seed)
    fmt = cfg.dataset
    handle = load_cifar(cfg.data_path, which, fmt)
    count = cfg.train_count if which == "train" else cfg.test_count
    return subset(handle, count, cfg.seed)


def _load_model(cfg: ExperimentConfig):
    if not cfg.checkpoint:
        raise ConfigError("this command requires a 'checkpoint' config key")
    model, meta = load_checkpoint(cfg.checkpoint)
    model.eval()
    return model, meta


def _analog_backend(cfg: ExperimentConfig) -> Backend:
    b = Backend.parse(cfg.backend)
    return b if b is not Backend.FLOAT_REFERENCE else Backend.NODAL_CROSSBAR


def checkpoint_name(cfg: ExperimentConfig) -> str:
    eps = cfg.eps_train
    tag = f"eps{eps:g}" if eps else "clean"
    return f"{cfg.model}_{tag}_seed{cfg.seed}.xbnn"


def cmd_train(cfg: ExperimentConfig) -> dict:
    train = load_dataset(cfg, "train")
    test = load_dataset(cfg, "test")
    model = build_model(cfg.model, train.num_classes)
    mean, std = train.stats()
    model.set_input_stats(mean, std)

    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                     momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                     eps_train=cfg.eps_train,
                     attack_steps=cfg.train_attack_steps,
                     augment=cfg.augment, seed=cfg.seed)
    if cfg.eps_train > 0:
        history = adversarial_train(model, train.images, train.labels, tc)
    else:
        history = vanilla_train(model, train.images, train.labels, tc)

    eval_set = subset(test, cfg.eval_count, cfg.seed)
    test_acc = evaluate_accuracy(model, eval_set.images, eval_set.labels)

    ckpt = os.path.join(cfg.out_dir, checkpoint_name(cfg))
    save_checkpoint(ckpt, model, {
        "eps_train": cfg.eps_train,
        "attack_steps": cfg.train_attack_steps,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "dataset": cfg.dataset,
        "num_classes": train.num_classes,
        "config_hash": cfg.config_hash(),
        "test_acc": test_acc,
    })
    _write_csv(os.path.join(cfg.out_dir, "train_history.csv"),
               ["epoch", "lr", "train_loss", "train_acc"],
               [(h["epoch"], f"{h['lr']:.6g}", f"{h['train_loss']:.6f}",
                 f"{h['train_acc']:.4f}") for h in history])
    return {
        "checkpoint": ckpt,
        "natural_test_acc": test_acc,
        "final_train_acc": history[-1]["train_acc"] if history else None,
    }


def cmd_attack_eval(cfg: ExperimentConfig) -> dict:
    model, meta = _load_model(cfg)
    test = subset(load_dataset(cfg, "test"), cfg.eval_count, cfg.seed)
    backend = Backend.parse(cfg.backend)
    precision = cfg.precision_config()
    xbar = cfg.crossbar_config()
    runner = None
    if backend is not Backend.FLOAT_REFERENCE:
        from ..nn import AnalogRunner
        runner = AnalogRunner(model, backend, precision, xbar)
    rows = []
    accs = {}
    for eps in cfg.eps_list:
        attack = AttackConfig(epsilon=float(eps), steps=cfg.attack_steps,
                              step_size=cfg.alpha or None,
                              random_start=cfg.random_start)
        acc = evaluate_accuracy(model, test.images, test.labels, backend,
                                attack, precision=precision, xbar_config=xbar,
                                runner=runner)
        rows.append((f"{eps:g}", f"{acc:.4f}", backend.value))
        accs[f"{eps:g}"] = acc
    _write_csv(os.path.join(cfg.out_dir, "attack_eval.csv"),
               ["epsilon", "accuracy", "backend"], rows)
    return {"accuracy_by_epsilon": accs, "backend": backend.value,
            "checkpoint_meta": meta, "n_eval": len(test)}


def cmd_nf_calibrate(cfg: ExperimentConfig) -> dict:
    base = cfg.crossbar_config()
    rows = []
    results = {}
    for size, target in zip(cfg.nf_sizes, cfg.nf_targets):
        sized = base.with_size(size, size)
        r_wire, achieved = calibrate_r_wire(sized, target, cfg.nf_samples,
                                            cfg.seed)
        rows.append((size, f"{target:g}", f"{sized.r_source:g}",
                     f"{sized.r_sink:g}", f"{r_wire:.4f}", f"{achieved:.6f}"))
        results[f"{size}x{size}"] = {"target": target, "r_wire": r_wire,
                                     "nf": achieved}
    # NF of the configured parasitics at each size, for the shipped presets
    preset_nf = {}
    for size in cfg.nf_sizes:
        nf = nodal_nf(base.with_size(size, size), cfg.nf_samples,
                      np.random.default_rng(cfg.seed))
        preset_nf[f"{size}x{size}"] = nf
    _write_csv(os.path.join(cfg.out_dir, "nf_calibrate.csv"),
               ["size", "target_nf", "r_source", "r_sink",
                "calibrated_r_wire", "achieved_nf"], rows)
    return {"calibrated": results, "configured_parasitics_nf": preset_nf}


def cmd_noise_report(cfg: ExperimentConfig) -> dict:
    model, meta = _load_model(cfg)
    test = subset(load_dataset(cfg, "test"), cfg.noise_samples, cfg.seed)
    backend = _analog_backend(cfg)
    precision = cfg.precision_config()
    xbar = cfg.crossbar_config()
    digital = collect_traces(model, test.images, "float_reference")
    analog = collect_traces(model, test.images, backend, precision=precision,
                            xbar_config=xbar)
    report = layer_noise_report(digital, analog)
    _write_csv(os.path.join(cfg.out_dir, "noise_report.csv"),
               ["layer", "snr", "ns", "n"],
               [(r.layer_id, f"{r.snr:.6f}", f"{r.ns:.8f}", r.n)
                for r in report])
    return {
        "backend": backend.value,
        "n_samples": len(test),
        "layers": {r.layer_id: {"snr": r.snr, "ns": r.ns} for r in report},
        "checkpoint_meta": meta,
    }


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    model, meta = _load_model(cfg)
    test = subset(load_dataset(cfg, "test"), cfg.eval_count, cfg.seed)
    backend = Backend.parse(cfg.backend)
    points = robustness_curve(model, test.images, test.labels, cfg.eps_list,
                              attack_steps=cfg.attack_steps,
                              precision=cfg.precision_config(),
                              xbar_config=cfg.crossbar_config(),
                              analog_backend=backend)
    _write_csv(os.path.join(cfg.out_dir, "sweep.csv"),
               ["epsilon", "digital_acc", "analog_acc", "gain"],
               [(f"{p.epsilon:g}", f"{p.digital_acc:.4f}",
                 f"{p.analog_acc:.4f}", f"{p.gain:.4f}") for p in points])
    return {
        "backend": backend.value,
        "curve": [{"epsilon": p.epsilon, "digital": p.digital_acc,
                   "analog": p.analog_acc, "gain": p.gain} for p in points],
        "checkpoint_meta": meta,
    }


def cmd_surrogate_fit(cfg: ExperimentConfig) -> dict:
    base = cfg.crossbar_config()
    sized = base.with_size(cfg.surrogate_rows, cfg.surrogate_cols)
    rng = np.random.default_rng(cfg.seed)
    dataset = generate_surrogate_dataset(sized, cfg.surrogate_samples, rng)
    data_path = os.path.join(cfg.out_dir, "surrogate_dataset.bin")
    dataset.save(data_path)
    model = fit_surrogate(dataset, sized, hidden_units=cfg.surrogate_hidden,
                          epochs=cfg.surrogate_epochs, seed=cfg.seed)
    model_path = os.path.join(cfg.out_dir, "surrogate_model.pt")
    model.save(model_path)

    nf_nodal = nodal_nf(sized, cfg.nf_samples, np.random.default_rng(cfg.seed))
    nf_surr = compute_nf(lambda v, g: surrogate_mvm(model, v, g), sized,
                         cfg.nf_samples, np.random.default_rng(cfg.seed))
    mse = model.metadata["holdout_mse"]
    var = model.metadata["holdout_output_variance"]
    _write_csv(os.path.join(cfg.out_dir, "surrogate_fit.csv"),
               ["metric", "value"],
               [("holdout_mse", f"{mse:.6e}"),
                ("holdout_output_variance", f"{var:.6e}"),
                ("mse_over_variance", f"{mse / var:.6f}"),
                ("nf_nodal", f"{nf_nodal:.6f}"),
                ("nf_surrogate", f"{nf_surr:.6f}")])
    return {
        "dataset": data_path,
        "model": model_path,
        "holdout_mse": mse,
        "holdout_output_variance": var,
        "mse_over_variance": mse / var,
        "nf_nodal": nf_nodal,
        "nf_surrogate": nf_surr,
        "fit_metadata": model.metadata,
    }


COMMANDS = {
    "train": cmd_train,
    "attack-eval": cmd_attack_eval,
    "nf-calibrate": cmd_nf_calibrate,
    "noise-report": cmd_noise_report,
    "sweep": cmd_sweep,
    "surrogate-fit": cmd_surrogate_fit,
}


def run(command: str, cfg: ExperimentConfig) -> dict:
    """Execute one subcommand; artifacts land in cfg.out_dir."""
    if command not in COMMANDS:
        raise ConfigError(
            f"unknown command {command!r}; known: {sorted(COMMANDS)}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    results = COMMANDS[command](cfg)
    _write_summary(cfg, command, results)
    return results
