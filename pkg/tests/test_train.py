"""Unit tests for the cross-validated training orchestration.

Small cohorts and small hidden layers keep these fast; what matters here
is the bookkeeping: deterministic splits and histories, scalers fitted on
training rows only, test rows never feeding a parameter update, the best
snapshot being restored, and byte-identical serialized results.
"""

import json

import numpy as np
import pytest

from epc_pinn.data import MinMaxScaler, TrainingArrays, build_matrices, load_cohort
from epc_pinn.errors import ConfigError, TrainingError
from epc_pinn.metrics import REPORT_VARIABLES
from epc_pinn.nn import load_checkpoint
from epc_pinn.physics import PhysicsConstants, energy_consumption, EnvelopeState
from epc_pinn.synth import GeneratorConfig, generate_cohort
from epc_pinn.train import (
    FULL_BATCH_LIMIT,
    TrainConfig,
    cross_validate,
    predict_physical,
    reconstruct_energy,
    results_payload,
    save_run_outputs,
    train_fold,
)


@pytest.fixture(scope="module")
def arrays(clean_cohort_dir):
    samples, _ = load_cohort(clean_cohort_dir)
    return build_matrices(samples)


def quick_config(**overrides):
    """Small network and few epochs; bookkeeping identical to defaults."""
    settings = dict(hidden_dims=(16, 16), max_epochs=5, seed=0)
    settings.update(overrides)
    return TrainConfig(**settings)


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.k_folds == 10
        assert config.val_fraction == 0.15
        assert config.learning_rate == 0.001
        assert config.scheduler_patience == 5
        assert config.early_stop_patience == 8
        assert config.batch_size is None
        assert config.hidden_dims == (256, 256)
        assert FULL_BATCH_LIMIT == 256

    def test_bad_values_are_config_errors(self):
        with pytest.raises(ConfigError):
            TrainConfig(k_folds=1)
        with pytest.raises(ConfigError):
            TrainConfig(val_fraction=1.5)
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(scheduler_factor=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(physics_weight=-0.1)

    def test_dict_roundtrip(self):
        config = TrainConfig(k_folds=5, batch_size=32, hidden_dims=(64, 64), seed=9)
        restored = TrainConfig.from_dict(config.to_dict())
        assert restored.to_dict() == config.to_dict()

    def test_unknown_key_is_config_error(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"momentum": 0.9})


class TestTrainFold:
    def test_history_lengths_match_epochs(self, arrays):
        config = quick_config(max_epochs=3)
        fold = train_fold(arrays, np.arange(4), config)
        assert len(fold.history.train_loss) == 3
        assert len(fold.history.val_loss) == 3
        assert len(fold.history.learning_rate) == 3
        assert fold.history.stop_epoch == 3

    def test_learning_rate_trace_never_increases(self, arrays):
        config = quick_config(max_epochs=60)
        fold = train_fold(arrays, np.arange(4), config)
        rates = fold.history.learning_rate
        assert all(b <= a for a, b in zip(rates, rates[1:]))
        assert rates[0] == config.learning_rate

    def test_best_val_loss_is_the_minimum(self, arrays):
        config = quick_config(max_epochs=40)
        fold = train_fold(arrays, np.arange(4), config)
        assert fold.history.best_val_loss == pytest.approx(
            min(fold.history.val_loss), rel=1e-15
        )
        assert fold.history.val_loss[fold.history.best_epoch] == pytest.approx(
            fold.history.best_val_loss, rel=1e-15
        )

    def test_indices_partition_the_cohort(self, arrays):
        test_indices = np.arange(4)
        fold = train_fold(arrays, test_indices, quick_config())
        groups = [fold.test_indices, fold.train_indices, fold.val_indices]
        combined = sorted(np.concatenate(groups).tolist())
        assert combined == list(range(arrays.n))
        for a in range(3):
            for b in range(a + 1, 3):
                assert set(groups[a].tolist()).isdisjoint(groups[b].tolist())

    def test_test_rows_never_reach_updates_or_scalers(self, arrays):
        fold = train_fold(arrays, np.arange(4), quick_config())
        test_set = set(fold.test_indices.tolist())
        assert test_set.isdisjoint(fold.update_indices.tolist())
        assert test_set.isdisjoint(fold.scaler_fit_indices.tolist())
        assert set(fold.val_indices.tolist()).isdisjoint(fold.update_indices.tolist())
        assert set(fold.update_indices.tolist()) == set(fold.train_indices.tolist())

    def test_scalers_were_fitted_on_the_training_rows_only(self, arrays):
        fold = train_fold(arrays, np.arange(4), quick_config())
        refit = MinMaxScaler().fit(arrays.features[fold.scaler_fit_indices])
        assert np.array_equal(refit.data_min_, fold.input_scaler.data_min_)
        assert np.array_equal(refit.data_max_, fold.input_scaler.data_max_)
        refit_t = MinMaxScaler().fit(arrays.targets[fold.scaler_fit_indices])
        assert np.array_equal(refit_t.data_min_, fold.target_scaler.data_min_)
        refit_e = MinMaxScaler().fit(arrays.measured_energy[fold.scaler_fit_indices])
        assert np.array_equal(refit_e.data_min_, fold.energy_scaler.data_min_)

    def test_deterministic_given_the_seed(self, arrays):
        config = quick_config(max_epochs=8)
        a = train_fold(arrays, np.arange(4), config)
        b = train_fold(arrays, np.arange(4), config)
        assert a.history.train_loss == b.history.train_loss
        assert a.history.val_loss == b.history.val_loss
        assert np.array_equal(a.predictions_physical, b.predictions_physical)
        assert np.array_equal(a.reconstructed_energy, b.reconstructed_energy)

    def test_seed_changes_the_run(self, arrays):
        a = train_fold(arrays, np.arange(4), quick_config(seed=0))
        b = train_fold(arrays, np.arange(4), quick_config(seed=1))
        assert a.history.train_loss != b.history.train_loss

    def test_predictions_are_clamped_nonnegative(self, arrays):
        fold = train_fold(arrays, np.arange(4), quick_config(max_epochs=1))
        assert np.all(fold.predictions_physical >= 0.0)
        assert np.all(fold.reconstructed_energy >= 0.0)

    def test_report_covers_all_variables(self, arrays):
        fold = train_fold(arrays, np.arange(4), quick_config())
        assert tuple(fold.report.variables) == REPORT_VARIABLES

    def test_small_noise_free_cohort_converges(self, tmp_path):
        """50 noise-free buildings, batch size 8 (so each epoch makes
        several updates): the best validation loss must fall below 0.01,
        i.e. the network learns the envelope from the features."""
        generate_cohort(
            GeneratorConfig(
                n_buildings=50, seed=77, consumption_noise=0.0, audit_noise=0.0
            ),
            tmp_path,
        )
        samples, _ = load_cohort(tmp_path)
        arrays50 = build_matrices(samples)
        config = TrainConfig(batch_size=8, seed=0)
        fold = train_fold(arrays50, np.arange(5), config)
        assert fold.history.best_val_loss < 0.01

    def test_non_finite_data_is_a_training_error_naming_the_fold(self, arrays):
        """An inf measured value in a validation row slips past the
        scalers (fitted on training rows only) and must surface from the
        loss as a TrainingError carrying the fold index."""
        config = quick_config()
        clean = train_fold(arrays, np.arange(4), config, fold_index=3)
        victim = int(clean.val_indices[0])
        poisoned = TrainingArrays(
            cadastre_numbers=arrays.cadastre_numbers,
            features=arrays.features,
            targets=arrays.targets,
            measured_energy=arrays.measured_energy.copy(),
            useful_area=arrays.useful_area,
            building_types=arrays.building_types,
        )
        poisoned.measured_energy[victim] = np.inf
        with pytest.raises(TrainingError, match="fold 3"):
            train_fold(poisoned, np.arange(4), config, fold_index=3)

    def test_too_small_pool_is_config_error(self, arrays):
        with pytest.raises(ConfigError):
            train_fold(arrays, np.arange(arrays.n - 1), quick_config())


class TestPredictionHelpers:
    def test_predict_physical_clamps(self, arrays):
        fold = train_fold(arrays, np.arange(4), quick_config(max_epochs=1))
        out = predict_physical(
            fold.model, fold.input_scaler, fold.target_scaler, arrays.features[:7]
        )
        assert out.shape == (7, 12)
        assert np.all(out >= 0.0)

    def test_reconstruct_energy_matches_scalar_physics(self, arrays):
        consts = PhysicsConstants()
        rows = arrays.targets[:6]
        energy = reconstruct_energy(
            rows, arrays.useful_area[:6], arrays.building_types[:6], consts
        )
        for i in range(6):
            scalar = energy_consumption(
                EnvelopeState.from_vector(rows[i]),
                arrays.useful_area[i],
                arrays.building_types[i],
                consts,
            ).energy_consumption
            assert energy[i] == pytest.approx(scalar, rel=1e-12)


class TestCrossValidate:
    def test_folds_partition_the_samples(self, arrays):
        result = cross_validate(arrays, quick_config(max_epochs=2))
        assert len(result.folds) == 10
        joined = np.concatenate([f.test_indices for f in result.folds])
        assert sorted(joined.tolist()) == list(range(arrays.n))

    def test_aggregate_and_losses_are_consistent(self, arrays):
        result = cross_validate(arrays, quick_config(max_epochs=2))
        assert result.aggregate.n_folds == 10
        assert tuple(result.aggregate.variables) == REPORT_VARIABLES
        finals = [f.history.train_loss[-1] for f in result.folds]
        assert result.final_train_loss_mean == pytest.approx(np.mean(finals))
        assert result.final_train_loss_std == pytest.approx(np.std(finals))
        bests = [f.history.best_val_loss for f in result.folds]
        assert result.best_val_loss_mean == pytest.approx(np.mean(bests))

    def test_payload_is_deterministic(self, arrays):
        config = quick_config(max_epochs=3)
        a = results_payload(cross_validate(arrays, config), config)
        b = results_payload(cross_validate(arrays, config), config)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_parallel_folds_change_nothing(self, arrays):
        config = quick_config(max_epochs=3)
        serial = results_payload(cross_validate(arrays, config, max_workers=1), config)
        threaded = results_payload(cross_validate(arrays, config, max_workers=4), config)
        assert json.dumps(serial, sort_keys=True) == json.dumps(threaded, sort_keys=True)

    def test_too_few_samples_is_config_error(self, arrays):
        small = TrainingArrays(
            cadastre_numbers=arrays.cadastre_numbers[:5],
            features=arrays.features[:5],
            targets=arrays.targets[:5],
            measured_energy=arrays.measured_energy[:5],
            useful_area=arrays.useful_area[:5],
            building_types=arrays.building_types[:5],
        )
        with pytest.raises(ConfigError):
            cross_validate(small, quick_config())


class TestSaveRunOutputs:
    def test_writes_results_report_and_checkpoints(self, arrays, tmp_path):
        config = quick_config(max_epochs=2)
        result = cross_validate(arrays, config)
        paths = save_run_outputs(result, config, tmp_path)
        assert (tmp_path / "results.json").exists()
        assert (tmp_path / "report.txt").exists()
        for i in range(10):
            assert (tmp_path / f"fold_{i:02d}.json").exists()
        payload = json.loads(paths["results"].read_text())
        assert payload["config"]["k_folds"] == 10
        assert len(payload["folds"]) == 10
        report_text = paths["report"].read_text()
        assert "energy_consumption" in report_text
        assert "±" in report_text

    def test_checkpoints_carry_scalers_and_constants(self, arrays, tmp_path):
        config = quick_config(max_epochs=2)
        result = cross_validate(arrays, config)
        save_run_outputs(result, config, tmp_path)
        model, extra = load_checkpoint(tmp_path / "fold_00.json")
        assert model.layer_dims == (17, 16, 16, 12)
        restored = MinMaxScaler.from_dict(extra["input_scaler"])
        assert np.array_equal(restored.data_min_, result.folds[0].input_scaler.data_min_)
        assert extra["constants"]["delta_t"] == 18.9
        assert extra["fold"] == 0

    def test_two_identical_runs_serialize_identically(self, arrays, tmp_path):
        config = quick_config(max_epochs=2)
        a_dir = tmp_path / "a"
        b_dir = tmp_path / "b"
        save_run_outputs(cross_validate(arrays, config), config, a_dir)
        save_run_outputs(cross_validate(arrays, config), config, b_dir)
        assert (a_dir / "results.json").read_bytes() == (b_dir / "results.json").read_bytes()
        assert (a_dir / "fold_04.json").read_bytes() == (b_dir / "fold_04.json").read_bytes()
