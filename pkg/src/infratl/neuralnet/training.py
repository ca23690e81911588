"""Mini-batch training loop with early stopping, plus checkpoint I/O."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..container import read_container, write_container
from .layers import Adam, mse
from .model import ModelConfig, SurrogateModel


@dataclass
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 150
    patience: int = 25
    lr: float = 1e-4
    lr_drop_epochs: tuple = (10, 30, 50)   # divide lr by 10 at each
    lr_floor: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def lr_at(self, epoch):
        drops = sum(1 for e in self.lr_drop_epochs if epoch >= e)
        return max(self.lr / 10.0 ** drops, self.lr_floor)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["lr_drop_epochs"] = list(self.lr_drop_epochs)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lr_drop_epochs" in d:
            d["lr_drop_epochs"] = tuple(d["lr_drop_epochs"])
        return cls(**d)


@dataclass
class Checkpoint:
    """Everything needed to reproduce inference: architecture, weights,
    batch-norm running statistics, normalizer statistics, training history."""

    config: ModelConfig
    state: dict                      # named tensors (parameters + running stats)
    history: dict = field(default_factory=lambda: {"train_loss": [], "val_loss": []})
    best_epoch: int = 0
    normalizer: dict = None
    train_config: dict = None

    def build_model(self):
        model = SurrogateModel(self.config)
        model.load_state_arrays(self.state)
        return model


def _dataset_batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield perm[i:i + batch_size]


def evaluate_loss(model, data, batch_size=32):
    """Inference-mode MSE over a dataset tuple (slices, freqs, labels)."""
    X, F, Y = data
    preds = model.predict(X, F, batch_size=batch_size)
    loss, _ = mse(Y, preds)
    return loss


def train(model, train_data, val_data, cfg=None, normalizer=None, verbose=False):
    """Run the full training recipe and return the best-checkpoint.

    ``train_data`` / ``val_data`` are tuples (slices, freqs, labels), already
    normalized. Shuffling, dropout masks, and therefore the final weights are
    a pure function of (initial weights, data, cfg.seed); the model is left
    holding the best-validation weights.
    """
    cfg = cfg or TrainConfig()
    Xt, Ft, Yt = train_data
    if len(Ft) == 0 or len(val_data[1]) == 0:
        raise ValueError("training and validation sets must be non-empty")
    optim = Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    history = {"train_loss": [], "val_loss": [], "lr": []}
    best_val = np.inf
    best_epoch = 0
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}

    for epoch in range(1, cfg.max_epochs + 1):
        optim.lr = cfg.lr_at(epoch)
        rng = np.random.default_rng((cfg.seed, epoch))
        epoch_loss = 0.0
        for b, idx in enumerate(_dataset_batches(len(Ft), cfg.batch_size, rng)):
            pred = model.forward(Xt[idx], Ft[idx], training=True,
                                 dropout_seed=(cfg.seed, epoch, b))
            loss, dloss = mse(Yt[idx], pred)
            model.backward(dloss)
            optim.step(model.parameters(), model.gradients())
            epoch_loss += loss * len(idx)
        train_loss = epoch_loss / len(Ft)
        val_loss = evaluate_loss(model, val_data, batch_size=cfg.batch_size)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        history["lr"].append(optim.lr)
        if verbose:
            print(f"epoch {epoch:3d}  lr {optim.lr:.1e}  train {train_loss:.5f}  val {val_loss:.5f}")
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
        if epoch - best_epoch >= cfg.patience:
            break

    model.load_state_arrays(best_state)
    return Checkpoint(config=model.config, state=best_state, history=history,
                      best_epoch=best_epoch, normalizer=normalizer,
                      train_config=cfg.to_dict())


def save_checkpoint(path, ckpt):
    meta = {
        "kind": "checkpoint",
        "model_config": ckpt.config.to_dict(),
        "history": ckpt.history,
        "best_epoch": ckpt.best_epoch,
        "normalizer": ckpt.normalizer,
        "train_config": ckpt.train_config,
    }
    write_container(path, ckpt.state, meta)


def load_checkpoint(path):
    arrays, meta = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ValueError(f"{path}: not a checkpoint container")
    return Checkpoint(config=ModelConfig.from_dict(meta["model_config"]),
                      state=arrays,
                      history=meta.get("history", {}),
                      best_epoch=meta.get("best_epoch", 0),
                      normalizer=meta.get("normalizer"),
                      train_config=meta.get("train_config"))
