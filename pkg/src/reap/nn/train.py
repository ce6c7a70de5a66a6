"""Approximation-aware training loop and evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .layers import cross_entropy
from .mnist import MnistDataset, Split
from .network import Network, NetworkSpec, sgd_update

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    eta: float = 0.05
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0
    qat_start_epoch: int = 3
    lr_decay: float = 0.5
    # forward used for QAT epochs: 'fake_quant', or 'approx_posit' for the slow fully approximate path
    qat_forward: str = "fake_quant"
    # final epochs that fine-tune through the approximate MAC forward (STE backward)
    approx_epochs: int = 0
    eval_mode: str | None = None
    # train on the first n samples only (smoke runs); None = full split
    train_limit: int | None = None

    def __post_init__(self):
        if self.train_limit is not None and self.train_limit < 1:
            raise ValueError(f"train_limit must be positive, got {self.train_limit}")
        if self.eta < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.eta}")
        if self.epochs < 0 or self.batch_size < 1 or self.approx_epochs < 0:
            raise ValueError("epochs and approx_epochs must be >= 0 and batch_size >= 1")
        if self.qat_forward not in ("fake_quant", "approx_posit"):
            raise ValueError(f"qat_forward must be 'fake_quant' or 'approx_posit', not {self.qat_forward!r}")

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        if "batch" in d:
            d["batch_size"] = d.pop("batch")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    mode: str
    lr: float
    loss: float
    train_acc: float
    test_acc: float
    seconds: float = field(default=0.0, compare=False)


def epoch_mode(cfg: TrainConfig, epoch: int) -> str:
    if epoch < cfg.qat_start_epoch:
        return "fp32"
    if epoch >= cfg.epochs - cfg.approx_epochs:
        return "approx_posit"
    return cfg.qat_forward


def evaluate(net: Network, split: Split, mode: str = "fp32", batch: int = 500) -> float:
    """Top-1 accuracy over the whole split."""
    if len(split) == 0:
        raise ValueError("cannot evaluate on an empty split")
    pred = net.predict(split.images, mode, batch)
    return float(np.mean(pred == split.labels))


def train(net: Network, data: MnistDataset, cfg: TrainConfig, progress=None) -> list[EpochRecord]:
    """Warm-up epochs in fp32, then QAT epochs; plain SGD with per-epoch decay.

    Shuffling draws from one generator seeded by ``cfg.seed`` so a run is
    reproducible in a single process.
    """
    rng = np.random.default_rng(cfg.seed)
    x, y = data.train.images, data.train.labels
    if cfg.train_limit is not None:
        x, y = x[:cfg.train_limit], y[:cfg.train_limit]
    n = len(y)
    params = net.parameters()
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        mode = epoch_mode(cfg, epoch)
        lr = cfg.eta * cfg.lr_decay ** epoch
        perm = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            probs = net.forward(x[idx], mode)
            loss_sum += cross_entropy(probs, y[idx]) * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
            grads = net.backward(y[idx])
            sgd_update(params, grads, lr)
        test_mode = cfg.eval_mode or ("fp32" if mode == "fp32" else "fake_quant")
        rec = EpochRecord(epoch, mode, lr, loss_sum / n, correct / n, evaluate(net, data.test, test_mode),
                          time.perf_counter() - t0)
        history.append(rec)
        log.info("epoch %d [%s] lr=%.4g loss=%.4f train=%.4f test=%.4f (%.0fs)", epoch, mode, lr, rec.loss,
                 rec.train_acc, rec.test_acc, rec.seconds)
        if progress:
            progress(rec)
    return history


def history_dicts(history: list[EpochRecord], with_time: bool = False) -> list[dict]:
    out = []
    for rec in history:
        d = asdict(rec)
        if not with_time:
            d.pop("seconds")
        out.append(d)
    return out


REFERENCE_CONFIG = {
    "layers": NetworkSpec().layers,
    "quant_mode": "posit82",
    "multiplier": {"kind": "dralm", "t": 2},
    "lanes": 4,
    "acc_feedback": "posit",
    # 6 fp32 warm-up, 4 fake-quant QAT, 1 fine-tune epoch through the approximate MAC forward
    "train": {"eta": 0.1, "lr_decay": 0.8, "epochs": 11, "batch": 64, "seed": 0, "qat_start_epoch": 6,
              "approx_epochs": 1},
}


class ConfigError(ValueError):
    pass


def parse_run_config(doc: dict) -> tuple[NetworkSpec, TrainConfig]:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    try:
        net = NetworkSpec.from_dict({k: v for k, v in doc.items() if k != "train"})
        cfg = TrainConfig.from_dict(doc.get("train", {}))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return net, cfg


def load_run_config(path: str | Path | None) -> tuple[NetworkSpec, TrainConfig]:
    """JSON run config (``layers``, ``quant_mode``, ``multiplier``, ``train``); None -> reference."""
    if path is None:
        return parse_run_config(REFERENCE_CONFIG)
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    return parse_run_config(doc)
