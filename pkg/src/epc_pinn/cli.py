"""Command-line entry point.

Subcommands:

    generate   write a synthetic cohort as CSV files
    train      cross-validated training on a CSV cohort
    predict    virtual audit of one building from a trained checkpoint
    audit      energy decomposition of a fully specified envelope
    evaluate   score a checkpoint against a CSV cohort

A single JSON config file (--config) can hold a "generate" section, a
"train" section, a "physics" section with constant overrides, and
top-level "seed", "out", "data", "n" defaults; command-line flags win
over the file. Exit codes: 0 success, 1 usage or configuration, 2 data
problems, 3 runtime failures. EPC_PINN_THREADS caps how many folds train
in parallel (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data, synth
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    EpcPinnError,
    UndefinedMetricError,
)
from .metrics import fold_report, format_metrics_table, format_report_table
from .nn import load_checkpoint
from .physics import (
    COMPONENTS,
    EnvelopeState,
    PhysicsConstants,
    energy_consumption,
)
from .train import (
    TrainConfig,
    cross_validate,
    predict_physical,
    reconstruct_energy,
    save_run_outputs,
)

PROG = "epc-pinn"


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped onto this package's exit 1."""

    def error(self, message):
        raise ConfigError(message)


def _load_json(path: str | Path, what: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(payload, dict):
        raise DataError(f"{path}: expected a JSON object at the top level")
    return payload


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        return _load_json(args.config, "config")
    return {}


def _setting(args, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _require_seed(args, config: dict) -> int:
    seed = _setting(args, config, "seed")
    if seed is None:
        raise ConfigError("--seed is required (or a top-level \"seed\" in --config)")
    return int(seed)


def _physics_constants(config: dict) -> PhysicsConstants | None:
    if "physics" not in config:
        return None
    section = config["physics"]
    if not isinstance(section, dict):
        raise ConfigError("\"physics\" config section must be an object")
    base = PhysicsConstants().to_dict()
    unknown = set(section) - set(base)
    if unknown:
        raise ConfigError(
            f"unknown physics constant(s): {', '.join(sorted(unknown))}"
        )
    base.update(section)
    return PhysicsConstants.from_dict(base)


def _thread_count() -> int:
    raw = os.environ.get("EPC_PINN_THREADS", "1")
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"EPC_PINN_THREADS must be an integer, got {raw!r}") from None
    if count < 1:
        raise ConfigError(f"EPC_PINN_THREADS must be >= 1, got {count}")
    return count


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args) -> int:
    config = _load_config(args)
    seed = _require_seed(args, config)
    section = config.get("generate", {})
    if not isinstance(section, dict):
        raise ConfigError("\"generate\" config section must be an object")
    payload = dict(section)
    payload["seed"] = seed
    n = _setting(args, config, "n")
    if n is not None:
        payload["n_buildings"] = int(n)
    payload.setdefault("n_buildings", 256)
    constants = _physics_constants(config)
    if constants is not None and "constants" not in payload:
        payload["constants"] = constants.to_dict()
    generator_config = synth.GeneratorConfig.from_dict(payload)
    out_dir = Path(_setting(args, config, "out", "."))
    paths = synth.generate_cohort(generator_config, out_dir)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args)
    seed = _require_seed(args, config)
    data_dir = _setting(args, config, "data")
    if data_dir is None:
        raise ConfigError("--data DIR is required (or \"data\" in --config)")
    section = config.get("train", {})
    if not isinstance(section, dict):
        raise ConfigError("\"train\" config section must be an object")
    payload = dict(section)
    payload["seed"] = seed
    constants = _physics_constants(config)
    if constants is not None and "constants" not in payload:
        payload["constants"] = constants.to_dict()
    train_config = TrainConfig.from_dict(payload)

    samples, dropped = data.load_cohort(data_dir)
    if not samples:
        raise DataError(f"no usable samples in {data_dir}")
    arrays = data.build_matrices(samples)
    result = cross_validate(arrays, train_config, max_workers=_thread_count())

    out_dir = Path(_setting(args, config, "out", "."))
    paths = save_run_outputs(result, train_config, out_dir)
    drop_path = out_dir / "drop_report.txt"
    drop_path.write_text(
        "".join(f"{number}: {reason}\n" for number, reason in dropped)
    )
    print(format_report_table(result.aggregate), end="")
    print(f"\nsamples: {arrays.n} (dropped: {len(dropped)})")
    print(f"results: {paths['results']}")
    print(f"report: {paths['report']}")
    return 0


def _checkpoint_bundle(path: str | Path):
    model, extra = load_checkpoint(path)
    try:
        input_scaler = data.MinMaxScaler.from_dict(extra["input_scaler"])
        target_scaler = data.MinMaxScaler.from_dict(extra["target_scaler"])
        constants = PhysicsConstants.from_dict(extra["constants"])
    except KeyError as exc:
        raise DataError(f"checkpoint {path} is missing extra field {exc}") from None
    return model, input_scaler, target_scaler, constants


def cmd_predict(args) -> int:
    model, input_scaler, target_scaler, constants = _checkpoint_bundle(args.checkpoint)
    building = _load_json(args.building, "building")
    for key in ("useful_area", "total_area", "floors", "apartments",
                "building_type", "serie"):
        if key not in building:
            raise DataError(f"{args.building}: missing field {key!r}")
    features = data.encode_features(
        useful_area=float(building["useful_area"]),
        total_area=float(building["total_area"]),
        floors=int(building["floors"]),
        apartments=int(building["apartments"]),
        building_type=str(building["building_type"]),
        serie=str(building["serie"]),
    )
    state_row = predict_physical(model, input_scaler, target_scaler, features)[0]
    state = EnvelopeState.from_vector(state_row)
    breakdown = energy_consumption(
        state, float(building["useful_area"]), str(building["building_type"]), constants
    )
    output = {
        "cadastre_number": building.get("cadastre_number"),
        "state": state.to_dict(),
        "breakdown": breakdown.to_dict(),
    }
    text = json.dumps(output, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"prediction: {args.out}")
    else:
        print(text)
    return 0


def _state_from_payload(payload: dict, path) -> tuple[EnvelopeState, float, str]:
    for key in ("areas", "u_values", "air_exchange_rate", "specific_heat_gains",
                "useful_area", "building_type"):
        if key not in payload:
            raise DataError(f"{path}: missing field {key!r}")

    def five(field_name: str) -> np.ndarray:
        value = payload[field_name]
        if isinstance(value, dict):
            missing = [name for name in COMPONENTS if name not in value]
            if missing:
                raise DataError(
                    f"{path}: {field_name} is missing component(s): {', '.join(missing)}"
                )
            return np.array([float(value[name]) for name in COMPONENTS])
        if isinstance(value, list) and len(value) == len(COMPONENTS):
            return np.array([float(v) for v in value])
        raise DataError(
            f"{path}: {field_name} must be a 5-entry list in component order "
            "or a mapping with all five component names"
        )

    state = EnvelopeState(
        areas=five("areas"),
        u_values=five("u_values"),
        air_exchange_rate=float(payload["air_exchange_rate"]),
        specific_heat_gains=float(payload["specific_heat_gains"]),
    )
    state.validate()
    return state, float(payload["useful_area"]), str(payload["building_type"])


def cmd_audit(args) -> int:
    config = _load_config(args)
    payload = _load_json(args.envelope, "envelope")
    state, useful_area, building_type = _state_from_payload(payload, args.envelope)
    constants = _physics_constants(config) or PhysicsConstants()
    breakdown = energy_consumption(state, useful_area, building_type, constants)
    for name, area, u, loss in zip(
        COMPONENTS, state.areas, state.u_values, breakdown.envelope_by_component
    ):
        print(
            f"{name:<16} area {area:10.2f} m2   U {u:6.3f} W/(m2K)   "
            f"loss {loss:12.2f} kWh/yr"
        )
    print(f"{'envelope total':<16} {breakdown.envelope_total:12.2f} kWh/yr")
    print(f"{'thermal bridges':<16} {breakdown.thermal_bridges:12.2f} kWh/yr")
    print(f"{'ventilation':<16} {breakdown.ventilation:12.2f} kWh/yr")
    print(f"{'total heat loss':<16} {breakdown.heat_loss_total:12.2f} kWh/yr")
    print(f"{'total heat gains':<16} {breakdown.heat_gains_total:12.2f} kWh/yr")
    print(f"{'usage factor':<16} {breakdown.hguf:12.4f}")
    print(f"{'consumption':<16} {breakdown.energy_consumption:12.2f} kWh/yr")
    return 0


def cmd_evaluate(args) -> int:
    model, input_scaler, target_scaler, constants = _checkpoint_bundle(args.checkpoint)
    samples, dropped = data.load_cohort(args.data)
    if not samples:
        raise DataError(f"no usable samples in {args.data}")
    arrays = data.build_matrices(samples)
    predictions = predict_physical(model, input_scaler, target_scaler, arrays.features)
    energy = reconstruct_energy(
        predictions, arrays.useful_area, arrays.building_types, constants
    )
    report = fold_report(
        arrays.targets, predictions, arrays.measured_energy, energy
    )
    print(format_metrics_table(report), end="")
    print(f"\nsamples: {arrays.n} (dropped: {len(dropped)})")
    if args.out:
        out_path = Path(args.out)
        out_path.write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        )
        print(f"metrics: {out_path}")
    return 0


# ---------------------------------------------------------------------------
# Wiring


def build_parser() -> _Parser:
    parser = _Parser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic cohort as CSV files")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="generator seed (required)")
    p.add_argument("--n", type=int, help="number of buildings")
    p.add_argument("--out", help="output directory (default .)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="cross-validated training on a CSV cohort")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="training seed (required)")
    p.add_argument("--data", help="directory with the cohort CSV files")
    p.add_argument("--out", help="output directory (default .)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="virtual audit of one building")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--building", required=True,
                   help="JSON file with the building's input features")
    p.add_argument("--out", help="write the prediction JSON here instead of stdout")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("audit", help="energy decomposition of a full envelope")
    p.add_argument("--config", help="JSON config file (physics overrides)")
    p.add_argument("--envelope", required=True,
                   help="JSON file with areas, U-values, rates and building type")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("evaluate", help="score a checkpoint against a cohort")
    p.add_argument("--checkpoint", required=True, help="trained model checkpoint")
    p.add_argument("--data", required=True, help="directory with the cohort CSV files")
    p.add_argument("--out", help="write the metrics JSON here as well")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DomainError, DimensionError, UndefinedMetricError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except EpcPinnError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # last resort: keep the exit-code contract
        print(f"{PROG}: unexpected error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
