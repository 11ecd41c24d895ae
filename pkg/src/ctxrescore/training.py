"""Training loop for the rescoring network, and inference-time rescoring.

One epoch is a pass over the training images in a seeded shuffled order,
grouped into whole-sequence batches (the final partial batch is kept; the
batch loss is the plain sum of per-sequence losses). After every epoch the
validation set is rescored and its AP drives model selection:

* the parameters of the best validation AP seen so far are retained;
* when the best AP has not improved for more than ``patience`` epochs, the
  learning rate is multiplied by ``lr_decay`` and the parameters revert to
  the best epoch (optimizer moments are kept);
* training stops after ``early_stop`` epochs without improvement, at
  ``max_epochs``, or when the epoch loss falls below ``loss_stop``.

A single seeded PRNG stream drives everything random, in a fixed order:
each epoch first draws the image order, then one shuffle decision (and, when
it fires, one permutation) per sequence as batches are assembled. Runs with
identical inputs and seeds are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .boxes import ImageRecord
from .evaluation import EvalParams, evaluate
from .features import FeatureSequence, extract_features
from .matching import TargetConfig, assign_targets, match_image
from .network import ModelConfig, forward, init_params, loss_and_grads, zero_grads
from .optim import AdamState, adam_step

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "shuffle_augment",
    "train_loop",
    "rescore_dataset",
    "history_csv_rows",
]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule and target construction knobs."""

    batch_size: int = 256
    learning_rate: float = 0.003
    shuffle_prob: float = 0.75
    lr_decay: float = 0.2
    patience: int = 4
    early_stop: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 200
    seed: int = 0
    matching: str = "localization"
    target: str = "iou"
    loss_stop: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.shuffle_prob <= 1.0:
            raise ValueError(f"shuffle_prob must be in [0, 1], got {self.shuffle_prob}")
        if not self.patience < self.early_stop:
            raise ValueError(
                f"patience ({self.patience}) must be smaller than early_stop ({self.early_stop})"
            )
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        TargetConfig(matching=self.matching, target=self.target)  # validates modes

    @property
    def target_config(self) -> TargetConfig:
        return TargetConfig(matching=self.matching, target=self.target)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_ap: float
    lr: float
    improved: bool
    decayed: bool


@dataclass
class TrainResult:
    params: dict
    config: ModelConfig
    history: list
    best_epoch: int
    best_val_ap: float
    diverged: bool = False


def shuffle_augment(seq: FeatureSequence, targets: np.ndarray, rng, prob: float):
    """With probability ``prob``, jointly permute the valid rows and targets.

    The permutation is uniform over the valid prefix; padding rows and their
    zero targets are untouched; the sequence's write-back map follows the
    rows. One uniform draw is always consumed, so streams stay aligned.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if rng.random() >= prob or seq.valid_len < 2:
        return seq, targets
    perm = rng.permutation(seq.valid_len)
    out_targets = targets.copy()
    out_targets[: seq.valid_len] = targets[: seq.valid_len][perm]
    return seq.permute(perm), out_targets


def _prepare_sequences(images, config: ModelConfig, target_config: TargetConfig):
    """Feature sequence plus row-aligned padded targets for every image."""
    prepared = []
    for rec in images:
        seq = extract_features(rec, config.num_classes)
        per_det = assign_targets(rec.dets, rec.gts, match_image(rec, target_config.matching), target_config.target)
        padded = np.zeros(seq.features.shape[0], dtype=np.float64)
        padded[: seq.valid_len] = per_det[seq.order]
        prepared.append((seq, padded))
    return prepared


def _copy_params(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


def train_loop(
    train_images,
    val_images,
    model_config: ModelConfig,
    train_config: TrainConfig,
    eval_params: EvalParams | None = None,
) -> TrainResult:
    """Train from scratch and return the best-validation-AP checkpoint and history.

    Targets are built once per training image with the configured matching
    and target mode. A non-finite loss or gradient aborts the run, returning
    the last good checkpoint with ``diverged`` set.
    """
    if not train_images:
        raise ValueError("training set is empty")
    if not val_images:
        raise ValueError("validation set is empty")
    eval_params = eval_params or EvalParams()
    rng = np.random.default_rng(train_config.seed)
    params = init_params(model_config)
    state = AdamState.for_params(params)
    prepared = _prepare_sequences(train_images, model_config, train_config.target_config)

    lr = train_config.learning_rate
    best_params = _copy_params(params)
    best_val_ap = -math.inf
    best_epoch = 0
    since_improve = 0
    since_decay = 0
    history: list[EpochStats] = []
    diverged = False

    for epoch in range(1, train_config.max_epochs + 1):
        order = rng.permutation(len(prepared))
        epoch_loss = 0.0
        try:
            for start in range(0, len(order), train_config.batch_size):
                batch = order[start : start + train_config.batch_size]
                grads_total = zero_grads(model_config)
                for idx in batch:
                    seq, targets = prepared[idx]
                    seq, targets = shuffle_augment(seq, targets, rng, train_config.shuffle_prob)
                    loss, grads, _ = loss_and_grads(seq, targets, params, model_config)
                    epoch_loss += loss
                    for name in grads_total:
                        grads_total[name] += grads[name]
                if not math.isfinite(epoch_loss):
                    raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
                adam_step(
                    params,
                    grads_total,
                    state,
                    lr,
                    beta1=train_config.beta1,
                    beta2=train_config.beta2,
                    eps=train_config.eps,
                )
        except FloatingPointError:
            diverged = True
            break

        val_ap = evaluate(
            rescore_dataset(val_images, params, model_config),
            eval_params,
            num_classes=model_config.num_classes,
        ).ap
        if val_ap is None:
            raise ValueError("validation set has no ground truth; AP is undefined")

        improved = val_ap > best_val_ap
        if improved:
            best_val_ap = val_ap
            best_epoch = epoch
            best_params = _copy_params(params)
            since_improve = 0
            since_decay = 0
        else:
            since_improve += 1
            since_decay += 1

        decayed = False
        if since_decay > train_config.patience:
            lr *= train_config.lr_decay
            params = _copy_params(best_params)
            since_decay = 0
            decayed = True

        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=epoch_loss,
                val_ap=val_ap,
                lr=lr,
                improved=improved,
                decayed=decayed,
            )
        )
        if since_improve >= train_config.early_stop:
            break
        if train_config.loss_stop is not None and epoch_loss < train_config.loss_stop:
            break

    if not history and diverged:
        raise FloatingPointError("training diverged before completing the first epoch")
    return TrainResult(
        params=best_params,
        config=model_config,
        history=history,
        best_epoch=best_epoch,
        best_val_ap=best_val_ap,
        diverged=diverged,
    )


def rescore_dataset(images, params: dict, config: ModelConfig) -> list[ImageRecord]:
    """New records whose detection scores come from the model; boxes and classes untouched.

    Sequences are sorted by the original confidences (never shuffled) and the
    predictions are written back through the sort's permutation map.
    """
    out = []
    for rec in images:
        if not rec.dets:
            out.append(ImageRecord(rec.image_id, rec.width, rec.height, list(rec.gts), []))
            continue
        seq = extract_features(rec, config.num_classes)
        trace = forward(seq, params, config)
        out.append(rec.with_scores(seq.scores_for_dets(trace.y_hat)))
    return out


def history_csv_rows(history) -> list[list[str]]:
    rows = [["epoch", "train_loss", "val_ap", "lr", "improved", "decayed"]]
    for h in history:
        rows.append(
            [
                str(h.epoch),
                repr(h.train_loss),
                repr(h.val_ap),
                repr(h.lr),
                str(int(h.improved)),
                str(int(h.decayed)),
            ]
        )
    return rows
