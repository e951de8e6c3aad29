from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from sa_reid.dataset.augmentation import augment
from sa_reid.dataset.toy_data import Sample
from sa_reid.exceptions import ConfigurationError, NonFiniteError, TrainingDivergedError
from sa_reid.model.model_config import ModelConfig
from sa_reid.model.network import backward, forward_backbone, forward_parts, forward_train, total_loss
from sa_reid.model.optimizer import sgd_step
from sa_reid.model.params import Params, init_params

LOSS_LOG_COLUMNS = ["epoch", "lr", "total_loss", "part_loss", "ds_loss", "main_loss", "train_accuracy"]


@dataclass(frozen=True)
class TrainingConfig:
    """
    Mini-batch SGD recipe.

    The learning rate starts at ``lr`` and is multiplied by ``lr_drop_factor`` once ``lr_drop_fraction`` of the
    epochs have run. ``compare_seeds`` lists the seeds of the attention ablation.
    """

    epochs: int = 30
    batch_size: int = 16
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    augment: bool = True
    lr_drop_fraction: float = 2 / 3
    lr_drop_factor: float = 0.1
    compare_seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"'epochs' must be non-negative, got {self.epochs}.")
        if self.batch_size < 1:
            raise ConfigurationError(f"'batch_size' must be positive, got {self.batch_size}.")
        if self.lr <= 0:
            raise ConfigurationError(f"'lr' must be positive, got {self.lr}.")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError(f"'momentum' must lie in [0, 1), got {self.momentum}.")
        if self.weight_decay < 0:
            raise ConfigurationError(f"'weight_decay' must be non-negative, got {self.weight_decay}.")
        if not 0.0 <= self.lr_drop_fraction <= 1.0:
            raise ConfigurationError(f"'lr_drop_fraction' must lie in [0, 1], got {self.lr_drop_fraction}.")
        if len(self.compare_seeds) < 1:
            raise ConfigurationError("'compare_seeds' must list at least one seed.")


@dataclass
class TrainingResult:
    params: Params
    loss_log: pd.DataFrame
    label_map: Dict[int, int]


def two_phase_lr_schedule(
    base_lr: float, epochs: int, drop_fraction: float = 2 / 3, factor: float = 0.1
) -> List[float]:
    """Learning rate of every epoch: ``base_lr`` until ``drop_fraction`` of the epochs, then ``base_lr * factor``."""
    drop_epoch = int(round(drop_fraction * epochs))
    return [base_lr if epoch < drop_epoch else base_lr * factor for epoch in range(epochs)]


def build_label_map(identities: Sequence[int], num_classes: int) -> Dict[int, int]:
    """Map the distinct identities, sorted, onto contiguous class indices."""
    label_map = {identity: label for label, identity in enumerate(sorted(set(identities)))}
    if len(label_map) > num_classes:
        raise ConfigurationError(
            f"The training data holds {len(label_map)} identities but the model has only {num_classes} classes."
        )
    return label_map


def predict_class(params: Params, cfg: ModelConfig, image: np.ndarray) -> int:
    """Argmax of the main head for one image."""
    tapes = {}
    stage_maps = forward_backbone(params, cfg, image, tapes)
    global_feature = np.mean(np.stack(forward_parts(params, cfg, stage_maps[-1], tapes)), axis=0)
    return int(np.argmax(params["main.fc.weight"] @ global_feature + params["main.fc.bias"]))


def classification_accuracy(
    params: Params, cfg: ModelConfig, samples: Sequence[Sample], label_map: Dict[int, int]
) -> float:
    """Fraction of ``samples`` whose main-head prediction is their mapped label (no augmentation)."""
    if len(samples) == 0:
        raise ConfigurationError("Cannot compute the accuracy of an empty sample list.")
    correct = sum(predict_class(params, cfg, sample.image) == label_map[sample.identity] for sample in samples)
    return correct / len(samples)


def train(
    cfg: ModelConfig,
    samples: Sequence[Sample],
    training: TrainingConfig,
    lr_schedule: Optional[Sequence[float]] = None,
    params: Optional[Params] = None,
    verbose: bool = True,
) -> TrainingResult:
    """
    Train the network with mini-batch SGD over seeded shuffles of ``samples``.

    Parameters
    ----------
    cfg : ModelConfig
        The architecture. ``cfg.seed`` seeds the initialisation, the shuffles and the augmentation.
    samples : sequence of Sample
        The training samples. Identities are mapped to classes with ``build_label_map``.
    training : TrainingConfig
    lr_schedule : sequence of float, optional
        Learning rate per epoch. Defaults to ``two_phase_lr_schedule`` built from ``training``.
    params : Params, optional
        Starting parameters. Initialised from ``cfg`` when omitted.
    verbose : bool, default: True
        Show a progress bar over the epochs.

    Returns
    -------
    TrainingResult
        The trained parameters, one loss-log row per epoch and the identity to class map.
    """
    if len(samples) == 0:
        raise ConfigurationError("Cannot train on an empty dataset.")
    label_map = build_label_map([sample.identity for sample in samples], cfg.num_classes)
    if lr_schedule is None:
        lr_schedule = two_phase_lr_schedule(
            base_lr=training.lr,
            epochs=training.epochs,
            drop_fraction=training.lr_drop_fraction,
            factor=training.lr_drop_factor,
        )
    if len(lr_schedule) < training.epochs:
        raise ConfigurationError(f"The learning-rate schedule covers {len(lr_schedule)} of {training.epochs} epochs.")

    params = init_params(cfg) if params is None else params
    velocity = None
    rng = np.random.default_rng([cfg.seed, 1])
    rows = []
    for epoch in tqdm(range(training.epochs), desc="Training", unit="epoch", disable=not verbose):
        lr = lr_schedule[epoch]
        order = rng.permutation(len(samples))
        sums = dict(total_loss=0.0, part_loss=0.0, ds_loss=0.0, main_loss=0.0)
        correct = 0
        for batch_index, start in enumerate(range(0, len(samples), training.batch_size)):
            batch = [samples[index] for index in order[start : start + training.batch_size]]
            batch_grads = None
            batch_loss = 0.0
            for sample in batch:
                image = augment(sample.image, rng) if training.augment else sample.image
                label = label_map[sample.identity]
                try:
                    record, losses = forward_train(params, cfg, image, label)
                except NonFiniteError:
                    raise TrainingDivergedError(
                        f"Training diverged at epoch {epoch}, batch {batch_index}: a feature map is not finite."
                    )
                loss = total_loss(losses, cfg.lam)
                grads = backward(record, losses, cfg.lam, params)
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for name in batch_grads:
                        batch_grads[name] += grads[name]
                batch_loss += loss
                sums["total_loss"] += loss
                sums["part_loss"] += sum(losses.parts)
                sums["ds_loss"] += sum(losses.ds)
                sums["main_loss"] += losses.main
                correct += int(np.argmax(record.global_logits) == label)
            if not np.isfinite(batch_loss) or not all(np.all(np.isfinite(grad)) for grad in batch_grads.values()):
                raise TrainingDivergedError(
                    f"Training diverged at epoch {epoch}, batch {batch_index}: the loss or its gradient is not finite."
                )
            for name in batch_grads:
                batch_grads[name] /= len(batch)
            params, velocity = sgd_step(
                params,
                batch_grads,
                lr=lr,
                momentum=training.momentum,
                velocity=velocity,
                weight_decay=training.weight_decay,
            )
        means = {key: value / len(samples) for key, value in sums.items()}
        rows.append(dict(epoch=epoch, lr=lr, **means, train_accuracy=correct / len(samples)))
    loss_log = pd.DataFrame(rows, columns=LOSS_LOG_COLUMNS)
    return TrainingResult(params=params, loss_log=loss_log, label_map=label_map)
