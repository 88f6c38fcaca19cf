"""Cross-validated training orchestration.

One outer k-fold split over the joined samples; within each fold the
non-test pool is split again into training and validation parts, the
three scalers (inputs, 12 targets, energy) are fitted on the training
part only, and the network trains with the two-term loss. The validation
loss drives both the plateau scheduler and early stopping; the best
snapshot is restored before the fold's test predictions are made and
scored. A fold records which sample indices reached scaler fitting and
parameter updates, so leakage is checkable after the fact.

Everything is deterministic given the config seed: the fold partition,
the per-fold splits, initialization and batch shuffling all derive their
seeds from (seed, fold index, stream index).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import MinMaxScaler, TrainingArrays, kfold_split, train_val_split
from .errors import ConfigError, TrainingError
from .loss import enhanced_loss
from .metrics import (
    AggregateReport,
    MetricsReport,
    aggregate_folds,
    fold_report,
    format_report_table,
)
from .nn import (
    AdamState,
    EarlyStopState,
    MlpModel,
    PlateauSchedulerState,
    adam_step,
    backward,
    forward,
    init_model,
    save_checkpoint,
)
from .physics import STATE_DIM, PhysicsConstants, energy_consumption_batch


# With the default batch_size=None, training sets up to this many rows use
# one full-batch update per epoch; larger sets are chunked so the epochs
# keep enough updates for patience-based scheduling to make sense.
FULL_BATCH_LIMIT = 256


@dataclass
class TrainConfig:
    k_folds: int = 10
    val_fraction: float = 0.15
    learning_rate: float = 0.001
    scheduler_patience: int = 5
    scheduler_factor: float = 0.1
    min_lr: float = 1e-7
    early_stop_patience: int = 8
    max_epochs: int = 500
    batch_size: int | None = None  # None = full batch up to FULL_BATCH_LIMIT
    hidden_dims: tuple[int, ...] = (256, 256)
    seed: int = 0
    physics_weight: float = 1.0
    constants: PhysicsConstants = field(default_factory=PhysicsConstants)

    def __post_init__(self) -> None:
        if self.k_folds < 2:
            raise ConfigError(f"k_folds must be >= 2, got {self.k_folds}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.scheduler_patience < 1 or self.early_stop_patience < 1:
            raise ConfigError("patience values must be >= 1")
        if not 0 < self.scheduler_factor < 1:
            raise ConfigError(
                f"scheduler_factor must be in (0, 1), got {self.scheduler_factor}"
            )
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ConfigError(f"bad hidden_dims {self.hidden_dims}")
        if self.physics_weight < 0:
            raise ConfigError(f"physics_weight must be >= 0, got {self.physics_weight}")

    def to_dict(self) -> dict:
        return {
            "k_folds": self.k_folds,
            "val_fraction": self.val_fraction,
            "learning_rate": self.learning_rate,
            "scheduler_patience": self.scheduler_patience,
            "scheduler_factor": self.scheduler_factor,
            "min_lr": self.min_lr,
            "early_stop_patience": self.early_stop_patience,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "hidden_dims": list(self.hidden_dims),
            "seed": self.seed,
            "physics_weight": self.physics_weight,
            "constants": self.constants.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        kwargs = dict(payload)
        if "constants" in kwargs:
            kwargs["constants"] = PhysicsConstants.from_dict(kwargs["constants"])
        if "hidden_dims" in kwargs:
            kwargs["hidden_dims"] = tuple(kwargs["hidden_dims"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"malformed training config: {exc}") from None


@dataclass
class TrainHistory:
    """Per-epoch traces; list lengths equal the number of epochs run."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    stop_epoch: int = 0
    best_val_loss: float = np.inf
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "learning_rate": self.learning_rate,
            "stop_epoch": self.stop_epoch,
            "best_val_loss": self.best_val_loss,
            "best_epoch": self.best_epoch,
        }


@dataclass(eq=False)
class FoldResult:
    fold_index: int
    model: MlpModel
    input_scaler: MinMaxScaler
    target_scaler: MinMaxScaler
    energy_scaler: MinMaxScaler
    history: TrainHistory
    test_indices: np.ndarray
    train_indices: np.ndarray
    val_indices: np.ndarray
    scaler_fit_indices: np.ndarray
    update_indices: np.ndarray  # every sample index that fed a parameter update
    predictions_physical: np.ndarray  # (n_test, 12), clamped at 0
    reconstructed_energy: np.ndarray  # (n_test,)
    report: MetricsReport


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def predict_physical(
    model: MlpModel,
    input_scaler: MinMaxScaler,
    target_scaler: MinMaxScaler,
    features: np.ndarray,
) -> np.ndarray:
    """Scaled forward pass mapped back to clamped physical units, (n, 12)."""
    scaled, _ = forward(model, input_scaler.transform(np.atleast_2d(features)))
    return np.maximum(target_scaler.inverse_transform(scaled), 0.0)


def reconstruct_energy(
    states_physical: np.ndarray,
    useful_area: np.ndarray,
    building_types: list[str],
    consts: PhysicsConstants,
) -> np.ndarray:
    """Annual energy for clamped physical state rows, (n,)."""
    taus = np.array([consts.time_constant_for(t) for t in building_types])
    return energy_consumption_batch(
        states_physical, np.asarray(useful_area, dtype=float), taus, consts
    ).energy_consumption


def train_fold(
    arrays: TrainingArrays,
    test_indices: np.ndarray,
    config: TrainConfig,
    fold_index: int = 0,
) -> FoldResult:
    """Train one fold and score its test set.

    test_indices select this fold's held-out rows of arrays; the
    remaining rows form the train/validation pool.
    """
    test_indices = np.asarray(test_indices, dtype=int)
    mask = np.ones(arrays.n, dtype=bool)
    mask[test_indices] = False
    pool = np.flatnonzero(mask)
    if pool.shape[0] < 2:
        raise ConfigError(
            f"fold {fold_index}: need at least 2 non-test samples, got {pool.shape[0]}"
        )
    split_seed = _derive_seed(config.seed, fold_index, 0)
    init_seed = _derive_seed(config.seed, fold_index, 1)
    shuffle_seed = _derive_seed(config.seed, fold_index, 2)
    train_idx, val_idx = train_val_split(pool, config.val_fraction, split_seed)

    input_scaler = MinMaxScaler().fit(arrays.features[train_idx])
    target_scaler = MinMaxScaler().fit(arrays.targets[train_idx])
    energy_scaler = MinMaxScaler().fit(arrays.measured_energy[train_idx])

    building_types = np.array(arrays.building_types)
    x_train = input_scaler.transform(arrays.features[train_idx])
    z_train = target_scaler.transform(arrays.targets[train_idx])
    x_val = input_scaler.transform(arrays.features[val_idx])
    z_val = target_scaler.transform(arrays.targets[val_idx])

    def loss_at(pred, targets, sample_idx):
        # sample_idx are absolute row indices into arrays.
        return enhanced_loss(
            predictions_scaled=pred,
            targets_scaled=targets,
            useful_area=arrays.useful_area[sample_idx],
            building_types=list(building_types[sample_idx]),
            measured_energy=arrays.measured_energy[sample_idx],
            target_scaler=target_scaler,
            energy_scaler=energy_scaler,
            consts=config.constants,
            physics_weight=config.physics_weight,
        )

    model = init_model((arrays.features.shape[1], *config.hidden_dims, STATE_DIM), init_seed)
    optimizer = AdamState(learning_rate=config.learning_rate)
    scheduler = PlateauSchedulerState(
        patience=config.scheduler_patience,
        factor=config.scheduler_factor,
        min_lr=config.min_lr,
    )
    stopper = EarlyStopState(patience=config.early_stop_patience)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    n_train = train_idx.shape[0]
    history = TrainHistory()
    updated: set[int] = set()

    batch_size = config.batch_size
    if batch_size is None:
        batch_size = min(n_train, FULL_BATCH_LIMIT)
    try:
        for epoch in range(config.max_epochs):
            if batch_size >= n_train:
                batches = [np.arange(n_train)]
            else:
                order = shuffle_rng.permutation(n_train)
                batches = [
                    order[start : start + batch_size]
                    for start in range(0, n_train, batch_size)
                ]
            weighted = 0.0
            for rows in batches:
                pred, cache = forward(model, x_train[rows])
                value = loss_at(pred, z_train[rows], train_idx[rows])
                grads = backward(model, cache, value.gradient_wrt_predictions)
                adam_step(model, grads, optimizer, context=f"epoch {epoch}")
                weighted += value.total * rows.shape[0]
                updated.update(int(i) for i in train_idx[rows])
            train_loss = weighted / n_train

            val_pred, _ = forward(model, x_val)
            val_loss = loss_at(val_pred, z_val, val_idx).total

            stop = stopper.step(val_loss, model, epoch)
            scheduler.step(val_loss, optimizer)
            history.train_loss.append(float(train_loss))
            history.val_loss.append(float(val_loss))
            history.learning_rate.append(float(optimizer.learning_rate))
            if stop:
                break
    except TrainingError as exc:
        raise TrainingError(f"fold {fold_index}: {exc}") from exc

    stopper.restore_best(model)
    history.stop_epoch = len(history.train_loss)
    history.best_val_loss = float(stopper.best)
    history.best_epoch = stopper.best_epoch

    predictions = predict_physical(
        model, input_scaler, target_scaler, arrays.features[test_indices]
    )
    energy = reconstruct_energy(
        predictions,
        arrays.useful_area[test_indices],
        list(building_types[test_indices]),
        config.constants,
    )
    report = fold_report(
        arrays.targets[test_indices],
        predictions,
        arrays.measured_energy[test_indices],
        energy,
    )
    return FoldResult(
        fold_index=fold_index,
        model=model,
        input_scaler=input_scaler,
        target_scaler=target_scaler,
        energy_scaler=energy_scaler,
        history=history,
        test_indices=test_indices,
        train_indices=train_idx,
        val_indices=val_idx,
        scaler_fit_indices=train_idx.copy(),
        update_indices=np.array(sorted(updated), dtype=int),
        predictions_physical=predictions,
        reconstructed_energy=energy,
        report=report,
    )


@dataclass(eq=False)
class CrossValidationResult:
    folds: list[FoldResult]
    aggregate: AggregateReport
    final_train_loss_mean: float
    final_train_loss_std: float
    best_val_loss_mean: float
    best_val_loss_std: float


def cross_validate(
    arrays: TrainingArrays, config: TrainConfig, max_workers: int = 1
) -> CrossValidationResult:
    """Run all folds (optionally in parallel threads) and aggregate.

    The fold partition, and therefore every result, depends only on the
    data and the config seed, never on max_workers.
    """
    if arrays.n < config.k_folds:
        raise ConfigError(
            f"need at least k_folds={config.k_folds} samples, got {arrays.n}"
        )
    folds = kfold_split(arrays.n, config.k_folds, seed=config.seed)
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [
                pool.submit(train_fold, arrays, test_indices, config, i)
                for i, test_indices in enumerate(folds)
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            train_fold(arrays, test_indices, config, i)
            for i, test_indices in enumerate(folds)
        ]
    aggregate = aggregate_folds([r.report for r in results])
    final_losses = np.array([r.history.train_loss[-1] for r in results])
    best_vals = np.array([r.history.best_val_loss for r in results])
    return CrossValidationResult(
        folds=results,
        aggregate=aggregate,
        final_train_loss_mean=float(final_losses.mean()),
        final_train_loss_std=float(final_losses.std()),
        best_val_loss_mean=float(best_vals.mean()),
        best_val_loss_std=float(best_vals.std()),
    )


def results_payload(result: CrossValidationResult, config: TrainConfig) -> dict:
    """JSON-ready summary of a cross-validation run. Contains nothing
    time- or machine-dependent, so identical runs serialize identically."""
    return {
        "config": config.to_dict(),
        "aggregate": result.aggregate.to_dict(),
        "final_train_loss": {
            "mean": result.final_train_loss_mean,
            "std": result.final_train_loss_std,
        },
        "best_val_loss": {
            "mean": result.best_val_loss_mean,
            "std": result.best_val_loss_std,
        },
        "folds": [
            {
                "fold": r.fold_index,
                "test_indices": [int(i) for i in r.test_indices],
                "history": r.history.to_dict(),
                "metrics": r.report.to_dict(),
            }
            for r in result.folds
        ],
    }


def save_run_outputs(
    result: CrossValidationResult, config: TrainConfig, out_dir: str | Path
) -> dict[str, Path]:
    """Write results.json, report.txt and one checkpoint per fold."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.json"
    results_path.write_text(
        json.dumps(results_payload(result, config), indent=2, sort_keys=True) + "\n"
    )
    report_path = out_dir / "report.txt"
    report_path.write_text(
        format_report_table(result.aggregate)
        + f"\nfolds: {len(result.folds)}\n"
        + "final training loss: "
        + f"{result.final_train_loss_mean:.4f} ± {result.final_train_loss_std:.4f}\n"
        + "best validation loss: "
        + f"{result.best_val_loss_mean:.4f} ± {result.best_val_loss_std:.4f}\n"
    )
    paths = {"results": results_path, "report": report_path}
    for r in result.folds:
        checkpoint_path = out_dir / f"fold_{r.fold_index:02d}.json"
        save_checkpoint(
            r.model,
            checkpoint_path,
            extra={
                "fold": r.fold_index,
                "input_scaler": r.input_scaler.to_dict(),
                "target_scaler": r.target_scaler.to_dict(),
                "energy_scaler": r.energy_scaler.to_dict(),
                "constants": config.constants.to_dict(),
            },
        )
        paths[f"fold_{r.fold_index:02d}"] = checkpoint_path
    return paths
