"""Mini-batch training, the low-to-high temperature curriculum, and
gradient-norm tracing.

Every run is a pure function of (data, config): shuffles are drawn from
a per-epoch stream seeded by (config.seed, epoch), so resuming a run from
a checkpoint replays the exact batch order the uninterrupted run would
have used.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .eval import decode_bits
from .nn import Adam, Model, nll_loss, save_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    pretrain_epochs: Optional[int] = None  # fine_tune stage-1 budget
    pretrain_lr: Optional[float] = None    # fine_tune stage-1 rate
    checkpoint_path: Optional[Path] = None
    checkpoint_every: int = 0  # epochs between saves; 0 = final save only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    train_gamma: float
    test_gamma: float
    grad_norm: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def grad_norms(self) -> list[float]:
        return [r.grad_norm for r in self.records]

    def final_test_gamma(self) -> float:
        return self.records[-1].test_gamma if self.records else float("nan")


class TrainingDiverged(RuntimeError):
    """Non-finite loss; carries the history gathered up to the failure."""

    def __init__(self, message: str, history: TrainHistory):
        super().__init__(message)
        self.history = history


def _as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, Dataset):
        return data.arrays()
    X, Y = data
    return np.asarray(X, np.float32), np.asarray(Y)


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    """2-norm over the concatenation of every parameter gradient."""
    total = 0.0
    for g in grads.values():
        total += float(np.dot(g.reshape(-1).astype(np.float64),
                              g.reshape(-1).astype(np.float64)))
    return float(np.sqrt(total))


def evaluate_gamma(model: Model, X: np.ndarray, Y: np.ndarray,
                   batch_size: int = 256) -> float:
    if len(X) == 0:
        return float("nan")
    correct = total = 0
    for i in range(0, len(X), batch_size):
        probs = model.forward(X[i:i + batch_size])
        bits = decode_bits(probs)
        correct += int((bits == Y[i:i + batch_size]).sum())
        total += bits.size
    return correct / total


def train(model: Model, train_data, test_data, config: TrainConfig,
          optimizer: Optional[Adam] = None, start_epoch: int = 0
          ) -> tuple[Model, TrainHistory]:
    """Shuffled mini-batch Adam on the head NLL.

    Per epoch the history records the running loss and train accuracy over
    the epoch's batches (at the parameters each batch was visited with),
    the test accuracy after the epoch, and the mean global gradient norm.
    """
    X, Y = _as_arrays(train_data)
    Xte, Yte = _as_arrays(test_data) if test_data is not None else (np.zeros((0,)), None)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if optimizer is None:
        optimizer = Adam(lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)
    params = model.params()
    history = TrainHistory()
    n = len(X)
    for epoch in range(start_epoch, start_epoch + config.epochs):
        perm = np.random.default_rng([config.seed, epoch]).permutation(n)
        loss_sum = 0.0
        norm_sum = 0.0
        correct = total = 0
        batches = 0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            xb, yb = X[idx], Y[idx]
            try:
                probs = model.forward(xb, train=True)
                loss = nll_loss(probs, yb)
                if not np.isfinite(loss):
                    raise FloatingPointError("non-finite loss")
                grads = model.backward(yb)
                norm_sum += global_grad_norm(grads)
                optimizer.step(params, grads)
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"{exc} at epoch {epoch}, batch {batches}", history) from exc
            loss_sum += loss
            bits = decode_bits(probs)
            correct += int((bits == yb).sum())
            total += bits.size
            batches += 1
        record = EpochRecord(
            epoch=epoch,
            loss=loss_sum / batches,
            train_gamma=correct / total,
            test_gamma=(evaluate_gamma(model, Xte, Yte)
                        if Yte is not None else float("nan")),
            grad_norm=norm_sum / batches,
        )
        history.records.append(record)
        done = epoch - start_epoch + 1
        if config.checkpoint_path is not None and config.checkpoint_every:
            if done % config.checkpoint_every == 0:
                save_checkpoint(config.checkpoint_path, model, optimizer,
                                epoch=epoch + 1)
    if config.checkpoint_path is not None:
        save_checkpoint(config.checkpoint_path, model, optimizer,
                        epoch=start_epoch + config.epochs)
    return model, history


def fine_tune(pretrain_data, pretrain_test, target_data, target_test,
              config: TrainConfig, architecture: Optional[list] = None,
              carry_optimizer: bool = False
              ) -> tuple[Model, TrainHistory, TrainHistory]:
    """Train from scratch on the pretrain distribution, then continue the
    same parameters on the target distribution.

    Stage budgets: config.pretrain_epochs (falls back to config.epochs)
    then config.epochs.  The optimizer restarts with empty moments at the
    switch unless carry_optimizer is set; stale second moments from the
    pretrain distribution otherwise distort the first target steps.
    """
    X, _ = _as_arrays(pretrain_data)
    L, M = X.shape[1], X.shape[2]
    model = Model(L, M, architecture, seed=config.seed)
    pre_epochs = (config.pretrain_epochs if config.pretrain_epochs is not None
                  else config.epochs)
    pre_lr = config.pretrain_lr if config.pretrain_lr is not None else config.lr
    optimizer = Adam(lr=pre_lr, beta1=config.beta1, beta2=config.beta2,
                     eps=config.eps)
    if pre_epochs > 0:
        pre_config = replace(config, epochs=pre_epochs, lr=pre_lr,
                             checkpoint_path=None)
        model, hist_pre = train(model, pretrain_data, pretrain_test,
                                pre_config, optimizer=optimizer)
    else:
        hist_pre = TrainHistory()
    if carry_optimizer:
        optimizer.lr = config.lr
    else:
        optimizer = Adam(lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)
    model, hist_ft = train(model, target_data, target_test, config,
                           optimizer=optimizer)
    return model, hist_pre, hist_ft


def gradient_norm_trace(model: Model, train_data, epochs: int,
                        config: Optional[TrainConfig] = None) -> list[float]:
    """Mean per-epoch global gradient 2-norms over `epochs` training epochs."""
    if epochs == 0:
        return []
    if config is None:
        config = TrainConfig(epochs=epochs)
    else:
        config = replace(config, epochs=epochs)
    _, history = train(model, train_data, None, config)
    return history.grad_norms()


def detect_plateau(grad_norms: Sequence[float], threshold: float,
                   window: int = 50) -> Optional[int]:
    """First epoch index whose trailing `window` mean norm sits below
    threshold, or None.  Diagnostic only; training never consults it."""
    norms = list(grad_norms)
    for end in range(window, len(norms) + 1):
        if float(np.mean(norms[end - window:end])) < threshold:
            return end - 1
    return None


# ---------------------------------------------------------------------------
# history CSV

HISTORY_COLUMNS = ("epoch", "loss", "train_gamma", "test_gamma", "grad_norm")


def write_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for r in history:
            writer.writerow([r.epoch, repr(r.loss), repr(r.train_gamma),
                             repr(r.test_gamma), repr(r.grad_norm)])


def read_history_csv(path) -> TrainHistory:
    history = TrainHistory()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            history.records.append(EpochRecord(
                epoch=int(row["epoch"]), loss=float(row["loss"]),
                train_gamma=float(row["train_gamma"]),
                test_gamma=float(row["test_gamma"]),
                grad_norm=float(row["grad_norm"])))
    return history
