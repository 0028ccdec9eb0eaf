"""Training loop, noise sweeps and result persistence (CSV, SVG, JSON)."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import data as data_mod
from . import nn
from .circuits import CircuitSpec, Shots, TEMPLATES
from .models import MODELS, build_model
from .noise import CHANNELS, PROBABILITY_GRID, SWEEP_GRID, NoiseConfig

log = logging.getLogger(__name__)

CSV_HEADER = ["model", "template", "layers", "channel", "probability", "epoch",
              "train_acc", "val_acc", "train_loss", "seed"]
DEFAULT_DATA_DIR = "data/mnist"
# Adam step sizes. QCNN's single-channel front converges too slowly at 0.01 to
# settle within the 15-epoch budget.
DEFAULT_LR = {"quann": 0.01, "qcnn": 0.03, "qtl": 0.01}

# Defaults chosen for desk-scale runs; they are written into every snapshot.
RUN_NOTES = {
    "optimizer": "adam",
    "encoding": "RY(pi * clamp(x)); tanh for unbounded activations",
    "weak_template": "axis cycles RY, RX, RZ by layer; one CNOT on pair ((l-1) mod (n-1), +1)",
    "noise_placement": "one channel per qubit after the last variational layer",
    "init": "circuit angles U[0, pi); dense Glorot-uniform; conv He-uniform",
}


class TrainingError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    model: str = "quann"
    template: Optional[str] = None
    layers: Optional[int] = None
    channel: str = "none"
    probabilities: list = field(default_factory=lambda: list(SWEEP_GRID))
    epochs: int = 15
    seed: int = 0
    train_per_class: int = 150
    val_per_class: int = 50
    batch_size: int = 32
    lr: Optional[float] = None  # None = per-model default (DEFAULT_LR)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shots: Optional[int] = None  # None = analytic evaluation
    data_dir: str = DEFAULT_DATA_DIR
    features_path: Optional[str] = None
    out_dir: str = "runs"
    freeze_quantum: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        default = build_model(self.model).circuit
        if self.template is None:
            self.template = default.template
        if self.layers is None:
            self.layers = default.n_layers
        if self.lr is None:
            self.lr = DEFAULT_LR[self.model]
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if self.channel not in ("none", "all") and self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        probs = []
        for p in self.probabilities:
            q = round(float(p), 1)
            if q not in PROBABILITY_GRID or abs(float(p) - q) > 1e-9:
                raise ValueError(f"probability {p} is not on the 0.1 grid")
            probs.append(q)
        self.probabilities = probs
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        with open(path) as f:
            values = json.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)

    def channels(self) -> list:
        if self.channel == "all":
            return list(CHANNELS)
        return [] if self.channel == "none" else [self.channel]

    def circuit(self, noise: Optional[NoiseConfig] = None) -> CircuitSpec:
        return CircuitSpec(4, self.template, self.layers, noise)

    def eval_mode(self, epoch: int):
        if self.shots is None:
            return "analytic"
        return Shots(self.shots, self.seed * 100_003 + epoch)


@dataclass
class RunRecord:
    config: dict
    channel: str = "none"
    probability: float = 0.0
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    final_params: dict = field(default_factory=dict)
    initial_params: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {"config": self.config, "channel": self.channel, "probability": self.probability,
                "metadata": self.metadata, "train_acc": self.train_acc, "val_acc": self.val_acc,
                "train_loss": self.train_loss, "epoch_seconds": self.epoch_seconds}


@dataclass
class SweepResult:
    baseline: RunRecord
    runs: dict = field(default_factory=dict)  # (channel, probability) -> RunRecord

    def records(self) -> list:
        return [self.baseline] + [self.runs[k] for k in sorted(self.runs)]


def load_datasets(cfg: ExperimentConfig):
    if cfg.features_path:
        pool = data_mod.load_feature_file(cfg.features_path)
        keep = np.isin(pool.labels, data_mod.CLASSES)
        pool = data_mod.DatasetSplit(pool.images[keep], pool.labels[keep], pool.meta)
    else:
        images, labels = data_mod.find_idx_files(cfg.data_dir)
        pool = data_mod.filter_and_normalize(data_mod.load_idx(images, labels))
    return data_mod.stratified_split(pool, cfg.train_per_class, cfg.val_per_class, cfg.seed)


def accuracy(model, params, split, mode="analytic", batch: int = 256) -> float:
    correct = 0
    for start in range(0, len(split), batch):
        xb = split.images[start:start + batch]
        m = mode
        if isinstance(mode, Shots):
            m = Shots(mode.count, mode.seed + start)
        logits = model.forward(params, xb, m).logits
        correct += int(np.sum(np.argmax(logits, axis=1) == split.labels[start:start + batch]))
    return correct / len(split)


def run_training(cfg: ExperimentConfig, channel: str = "none", probability: float = 0.0,
                 datasets=None) -> RunRecord:
    """Train one model; deterministic under ``cfg.seed`` in analytic mode."""
    noise = None if channel == "none" else NoiseConfig(channel, probability)
    model = build_model(cfg.model, cfg.circuit(noise),
                        **({"freeze_quantum": True} if cfg.freeze_quantum else {}))
    train, val = datasets if datasets is not None else load_datasets(cfg)

    # Separate streams so the noise setting never shifts init or batch order.
    init_rng = np.random.default_rng([cfg.seed, 1])
    order_rng = np.random.default_rng([cfg.seed, 2])
    params = model.init_params(init_rng)
    record = RunRecord(cfg.snapshot(), channel, float(probability),
                       initial_params={k: v.copy() for k, v in params.items()},
                       metadata={**RUN_NOTES, **model.metadata(), "model_kind": model.kind})
    opt = nn.AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    trainable = model.trainable()

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for b, (xb, yb) in enumerate(train.batches(cfg.batch_size, order_rng), 1):
            loss, grads, _ = model.loss_and_grad(params, xb, yb)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {b}")
            params = nn.adam_update(opt, params, {k: grads[k] for k in trainable})
            losses.extend([loss] * len(yb))
        mode = cfg.eval_mode(epoch)
        record.train_loss.append(float(np.mean(losses)))
        record.train_acc.append(accuracy(model, params, train, mode))
        record.val_acc.append(accuracy(model, params, val, mode))
        record.epoch_seconds.append(time.perf_counter() - t0)
        log.info("%s %s p=%.1f epoch %d: loss %.4f train %.3f val %.3f", cfg.model, channel,
                 probability, epoch, record.train_loss[-1], record.train_acc[-1], record.val_acc[-1])
    record.final_params = params
    return record


def _sweep_job(args):
    cfg, channel, p = args
    return run_training(cfg, channel, p)


def sweep_points(cfg: ExperimentConfig) -> list:
    return [("none", 0.0)] + [(c, p) for c in cfg.channels() for p in cfg.probabilities]


def run_noise_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Noise-free baseline plus one run per (channel, probability).

    All runs share the split, the initial parameters and the batch order; only
    the noise fields differ.
    """
    if cfg.model == "qtl":
        raise ValueError("noise sweeps cover the quann and qcnn models only")
    points = sweep_points(cfg)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            records = list(pool.map(_sweep_job, [(cfg, c, p) for c, p in points]))
    else:
        datasets = load_datasets(cfg)
        records = [run_training(cfg, c, p, datasets) for c, p in points]
    result = SweepResult(records[0])
    for (c, p), rec in zip(points[1:], records[1:]):
        result.runs[(c, p)] = rec
    return result


# --- persistence ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def csv_rows(result) -> list:
    records = result.records() if isinstance(result, SweepResult) else [result]
    rows = []
    for rec in records:
        cfg = rec.config
        for e in range(len(rec.val_acc)):
            rows.append([cfg["model"], cfg["template"], str(cfg["layers"]), rec.channel,
                         _fmt(rec.probability), str(e + 1), _fmt(rec.train_acc[e]),
                         _fmt(rec.val_acc[e]), _fmt(rec.train_loss[e]), str(cfg["seed"])])
    return rows


def emit_csv(result, path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(csv_rows(result))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> SweepResult:
    """Rebuild metric curves from an emitted CSV (parameters are not stored)."""
    groups: dict = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            key = (row["channel"], float(row["probability"]))
            rec = groups.get(key)
            if rec is None:
                cfg = {"model": row["model"], "template": row["template"],
                       "layers": int(row["layers"]), "seed": int(row["seed"])}
                rec = groups[key] = RunRecord(cfg, key[0], key[1])
            rec.train_acc.append(float(row["train_acc"]))
            rec.val_acc.append(float(row["val_acc"]))
            rec.train_loss.append(float(row["train_loss"]))
    if ("none", 0.0) not in groups:
        raise ValueError(f"{path}: no noise-free baseline rows")
    result = SweepResult(groups.pop(("none", 0.0)))
    result.runs.update(groups)
    return result


def emit_snapshots(result, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = result.records() if isinstance(result, SweepResult) else [result]
    paths = []
    for rec in records:
        name = f"{rec.config['model']}_{rec.channel}_{rec.probability:.1f}.json"
        path = out_dir / name
        path.write_text(json.dumps(rec.snapshot(), indent=2, sort_keys=True) + "\n")
        paths.append(path)
    return paths


def emit_plot(sweep: SweepResult, path, overlay: bool = False) -> Path:
    """Validation accuracy per epoch, noisy curves against the noise-free baseline (SVG)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    runs = [sweep.runs[k] for k in sorted(sweep.runs)]
    base = sweep.baseline
    epochs = np.arange(1, len(base.val_acc) + 1)
    model = base.config.get("model", "")
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "hqnn"}):
        if overlay or not runs:
            fig, ax = plt.subplots(figsize=(6, 4))
            axes = [ax] * max(len(runs), 1)
        else:
            cols = min(5, len(runs))
            rows = -(-len(runs) // cols)
            fig, grid = plt.subplots(rows, cols, figsize=(3 * cols, 2.6 * rows),
                                     sharex=True, sharey=True, squeeze=False)
            axes = list(grid.ravel())
            for ax in axes[len(runs):]:
                ax.set_visible(False)
        drawn = set()
        for ax, rec in zip(axes, runs):
            label = f"{rec.channel} p={rec.probability:.1f}"
            line, = ax.plot(np.arange(1, len(rec.val_acc) + 1), rec.val_acc, label=label)
            line.set_gid(f"curve-{rec.channel}-p{rec.probability:.1f}")
            if id(ax) not in drawn:
                bl, = ax.plot(epochs, base.val_acc, "k--", label="noise-free")
                bl.set_gid(f"baseline-{len(drawn)}")
                drawn.add(id(ax))
            if not overlay:
                ax.set_title(label, fontsize=9)
        if not runs:
            bl, = axes[0].plot(epochs, base.val_acc, "k--", label="noise-free")
            bl.set_gid("baseline-0")
        for ax in set(axes):
            ax.set_ylim(0.0, 1.0)
            ax.set_xlabel("epoch")
            ax.set_ylabel("validation accuracy")
        if overlay or not runs:
            axes[0].legend(fontsize=7)
        fig.suptitle(f"{model}: validation accuracy, noisy vs noise-free")
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
