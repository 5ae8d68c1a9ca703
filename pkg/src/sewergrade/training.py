"""Mini-batch training loop with validation tracking and best-epoch selection."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .checkpoint import ModelCheckpoint
from .dataset import ImageSample
from .errors import DatasetError, NonFiniteError, TrainingDivergedError
from .model import NUM_CLASSES, SewerNet
from .nn import Adam, softmax_cross_entropy_batch

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainReport",
    "EvalMetrics",
    "load_image_arrays",
    "evaluate",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-6
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    eval_every: int = 1
    select_best: bool = True
    patience: int | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be at least 1, got {self.eval_every}")
        if self.patience is not None and self.patience < 1:
            raise ValueError(f"patience must be at least 1, got {self.patience}")


@dataclass(frozen=True)
class EpochStats:
    """Metrics for one epoch; validation fields are NaN on skipped epochs."""

    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    seconds: float


@dataclass(frozen=True)
class TrainReport:
    history: tuple[EpochStats, ...]
    best_epoch: int
    best_val_accuracy: float
    stopped_early: bool
    wall_seconds: float

    @property
    def epochs_run(self) -> int:
        return len(self.history)


@dataclass(frozen=True)
class EvalMetrics:
    loss: float
    accuracy: float


def load_image_arrays(samples: list[ImageSample]) -> tuple[np.ndarray, np.ndarray]:
    """Decode sample images into a (N, 150, 150, 3) float32 batch in [0, 1]."""
    if not samples:
        raise DatasetError("no samples to load")
    images = np.empty((len(samples), 150, 150, 3), dtype=np.float32)
    labels = np.empty(len(samples), dtype=np.int64)
    for i, sample in enumerate(samples):
        with Image.open(sample.path) as img:
            frame = np.asarray(img.convert("RGB"))
        if frame.shape != (150, 150, 3):
            raise DatasetError(
                f"{sample.path}: expected a 150x150 RGB image, got {frame.shape}"
            )
        images[i] = frame.astype(np.float32) / 255.0
        labels[i] = sample.label_index
    return images, labels


def _check_arrays(x: np.ndarray, y: np.ndarray, what: str) -> None:
    if x.ndim != 4 or x.shape[0] != y.shape[0]:
        raise DatasetError(
            f"{what}: images {x.shape} and labels {y.shape} do not line up"
        )
    if x.shape[0] == 0:
        raise DatasetError(f"{what}: empty")
    if y.min() < 0 or y.max() >= NUM_CLASSES:
        raise DatasetError(f"{what}: labels must lie in [0, {NUM_CLASSES})")


def evaluate(
    network: SewerNet,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 64,
) -> EvalMetrics:
    """Eval-mode loss and top-1 accuracy, computed in batches."""
    _check_arrays(images, labels, "evaluation set")
    n = images.shape[0]
    total_loss = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        xb = images[start : start + batch_size]
        yb = labels[start : start + batch_size]
        logits = network.forward(xb, mode="eval")
        loss, _ = softmax_cross_entropy_batch(logits, yb)
        total_loss += loss * xb.shape[0]
        correct += int((logits.argmax(axis=1) == yb).sum())
    return EvalMetrics(loss=total_loss / n, accuracy=correct / n)


def train(
    network: SewerNet,
    train_images: np.ndarray,
    train_labels: np.ndarray,
    val_images: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
    config: TrainConfig | None = None,
) -> tuple[ModelCheckpoint, TrainReport]:
    """Optimize the network in place; returns the selected checkpoint.

    Validation runs every ``eval_every`` epochs (always on the last one).
    With ``select_best`` the returned checkpoint carries the weights from
    the epoch with the highest validation accuracy, and the network is
    left holding those weights too; otherwise the final epoch wins.
    A non-finite training loss aborts immediately rather than letting a
    diverged run burn the remaining epochs.
    """
    config = config or TrainConfig()
    _check_arrays(train_images, train_labels, "training set")
    has_val = val_images is not None
    if has_val:
        if val_labels is None:
            raise DatasetError("validation images given without labels")
        _check_arrays(val_images, val_labels, "validation set")

    shuffle_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    optimizer = Adam(network.params(), lr=config.learning_rate)
    n = train_images.shape[0]

    history: list[EpochStats] = []
    best_epoch = 0
    best_accuracy = -1.0
    best_params: dict[str, np.ndarray] | None = None
    evals_since_improvement = 0
    stopped_early = False
    started = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        epoch_started = time.perf_counter()
        order = shuffle_rng.permutation(n)
        running_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = train_images[idx]
            yb = train_labels[idx]
            try:
                logits, caches = network.forward(
                    xb, mode="train", rng=dropout_rng, with_caches=True
                )
                loss, grad_logits = softmax_cross_entropy_batch(logits, yb)
                if not math.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch offset {start}"
                    )
                _, grads = network.backward(grad_logits, caches)
                optimizer.step(grads)
            except NonFiniteError as err:
                raise TrainingDivergedError(
                    f"non-finite values at epoch {epoch}, batch offset {start}: {err}"
                ) from err
            running_loss += loss * xb.shape[0]
        train_loss = running_loss / n

        val_loss = float("nan")
        val_accuracy = float("nan")
        should_eval = has_val and (
            epoch % config.eval_every == 0 or epoch == config.epochs
        )
        if should_eval:
            metrics = evaluate(network, val_images, val_labels)
            val_loss, val_accuracy = metrics.loss, metrics.accuracy
            if val_accuracy > best_accuracy:
                best_accuracy = val_accuracy
                best_epoch = epoch
                evals_since_improvement = 0
                if config.select_best:
                    best_params = {
                        name: value.copy() for name, value in network.params().items()
                    }
            else:
                evals_since_improvement += 1

        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                val_accuracy=val_accuracy,
                seconds=time.perf_counter() - epoch_started,
            )
        )

        if (
            config.patience is not None
            and has_val
            and evals_since_improvement >= config.patience
        ):
            stopped_early = True
            break

    if config.select_best and best_params is not None:
        network.load_params(best_params)
        selected = "best"
    else:
        best_epoch = history[-1].epoch
        selected = "last"

    report = TrainReport(
        history=tuple(history),
        best_epoch=best_epoch,
        best_val_accuracy=best_accuracy if has_val else float("nan"),
        stopped_early=stopped_early,
        wall_seconds=time.perf_counter() - started,
    )
    checkpoint = ModelCheckpoint.from_network(
        network,
        metadata={
            "learning_rate": repr(config.learning_rate),
            "batch_size": str(config.batch_size),
            "seed": str(config.seed),
            "epochs_run": str(report.epochs_run),
            "best_epoch": str(report.best_epoch),
            "selected": selected,
        },
    )
    return checkpoint, report
