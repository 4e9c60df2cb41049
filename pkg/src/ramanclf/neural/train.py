"""Adam, the training loop, history and checkpoints."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .layers import cross_entropy
from .model import BATCH_SIZES, ModelSpec, Network, build_model

CHECKPOINT_VERSION = 1


class TrainingDiverged(ArithmeticError):
    def __init__(self, epoch, loss):
        super().__init__(f"loss became {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    calibrate_bn: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @classmethod
    def for_model(cls, name, **kw):
        kw.setdefault("batch_size", BATCH_SIZES.get(name, 64))
        return cls(**kw)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params  # list of (key, layer, name)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(l.params[n]) for k, l, n in params}
        self.v = {k: np.zeros_like(l.params[n]) for k, l, n in params}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k, layer, name in self.params:
            g = layer.grads[name]
            m = self.m[k] = b1 * self.m[k] + (1 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            layer.params[name] = layer.params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    @property
    def best_val_epoch(self):
        vals = [v for v in self.val_accuracy if not math.isnan(v)]
        if not vals:
            return None
        return int(np.nanargmax(self.val_accuracy)) + 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_accuracy"])
        for i, (l, a) in enumerate(zip(self.train_loss, self.val_accuracy), start=1):
            w.writerow([i, repr(float(l)), "" if math.isnan(a) else repr(float(a))])
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).write_text(self.to_csv())


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # batchnorm statistics are undefined on a single sample
    if len(out) > 1 and len(out[-1]) == 1:
        out.pop()
    return out


def fit_network(net: Network, X, y, cfg: TrainConfig, X_val=None, y_val=None) -> History:
    """Train ``net`` in place on arrays; returns the loss/accuracy history.

    When ``cfg.calibrate_bn`` is set, batchnorm running statistics are
    re-estimated on the full training set after the last epoch (and before
    every validation pass), so eval-mode predictions do not depend on the
    momentum lag of the last few batches.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(net.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    hist = History()
    for epoch in range(1, cfg.epochs + 1):
        total, seen = 0.0, 0
        for idx in _batches(len(X), cfg.batch_size, rng):
            net.zero_grad()
            logits = net.forward(X[idx], train=True)
            loss, dlogits = cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, loss)
            net.backward(dlogits)
            opt.step()
            total += loss * len(idx)
            seen += len(idx)
        hist.train_loss.append(total / max(seen, 1))
        net.epoch = epoch
        if cfg.calibrate_bn and (epoch == cfg.epochs or X_val is not None):
            net.calibrate_batchnorm(X)
        if X_val is not None and len(X_val):
            net.trained = True
            acc = float(np.mean(net.predict(X_val) == np.asarray(y_val)))
            hist.val_accuracy.append(acc)
        else:
            hist.val_accuracy.append(float("nan"))
    net.trained = True
    return hist


def train(m: ModelSpec | str, d, split, cfg: TrainConfig):
    """Train an architecture on the split's train rows of dataset ``d``.

    Returns (network, history). Validation accuracy is tracked when the
    split has a validation part.
    """
    spec = build_model(m, d.n_classes, d.rows.shape[1]) if isinstance(m, str) else m
    net = Network(spec, seed=cfg.seed)
    X_val = d.rows[split.val] if len(split.val) else None
    y_val = d.labels[split.val] if len(split.val) else None
    hist = fit_network(net, d.rows[split.train], d.labels[split.train], cfg, X_val, y_val)
    return net, hist


def predict(net: Network, X):
    """(labels, probabilities) in eval mode."""
    if not net.trained:
        raise RuntimeError("model has not been trained")
    proba = net.predict_proba(X)
    return proba.argmax(axis=1), proba


def save_checkpoint(net: Network, path, cfg: TrainConfig | None = None):
    header = {
        "format": "ramanclf-checkpoint",
        "version": CHECKPOINT_VERSION,
        "spec": net.spec.to_dict(),
        "seed": net.seed,
        "epoch": net.epoch,
        "trained": net.trained,
        "config": asdict(cfg) if cfg is not None else None,
    }
    arrays = {f"p/{k}": v for k, v in net.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> Network:
    with np.load(path) as z:
        header = json.loads(bytes(z["__header__"]).decode())
        if header.get("format") != "ramanclf-checkpoint":
            raise ValueError(f"{path}: not a model checkpoint")
        if header["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"{path}: checkpoint version {header['version']} is newer than supported")
        state = {k[2:]: z[k] for k in z.files if k.startswith("p/")}
    net = Network(ModelSpec.from_dict(header["spec"]), seed=header["seed"])
    net.load_state_dict(state)
    net.epoch = header["epoch"]
    net.trained = header["trained"]
    return net
