"""Two-term training loss: data fit plus physics consistency.

The network predicts the twelve scaled envelope quantities. The first
term is the plain MSE against the scaled targets. For the second term
each prediction row is mapped back to physical units, floored at zero,
pushed through the annual energy balance, rescaled with the energy
scaler, and compared against the scaled measured consumption:

    total = mse(z) + weight * mse(y)

with z the scaled 12-vectors and y the scaled energies. Both terms live
in scaled space so neither dominates by unit choice. The gradient with
respect to the scaled predictions is exact: inverse scaling is affine
(slope = per-column range), the zero floor contributes a zero
subgradient, and the energy balance supplies its own analytic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MinMaxScaler
from .errors import DimensionError, TrainingError
from .physics import STATE_DIM, PhysicsConstants, energy_consumption_batch


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean of elementwise squared differences."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


@dataclass(eq=False)
class LossValue:
    """One loss evaluation; mse_y is stored unweighted, total applies the
    physics weight (so total = mse_z + mse_y at the default weight 1)."""

    total: float
    mse_z: float
    mse_y: float
    gradient_wrt_predictions: np.ndarray  # (n, 12)


def enhanced_loss(
    predictions_scaled: np.ndarray,
    targets_scaled: np.ndarray,
    useful_area: np.ndarray,
    building_types: list[str],
    measured_energy: np.ndarray,
    target_scaler: MinMaxScaler,
    energy_scaler: MinMaxScaler,
    consts: PhysicsConstants,
    physics_weight: float = 1.0,
) -> LossValue:
    """Evaluate the loss and its gradient for one batch.

    predictions_scaled/targets_scaled are (n, 12) in scaled units,
    measured_energy is (n,) in kWh/yr, useful_area (n,) in m2. The
    scalers must be fitted (target scaler on the 12 columns, energy
    scaler on one column).
    """
    pred = np.asarray(predictions_scaled, dtype=float)
    targets = np.asarray(targets_scaled, dtype=float)
    if pred.ndim != 2 or pred.shape[1] != STATE_DIM:
        raise DimensionError(f"expected predictions of shape (n, {STATE_DIM}), got {pred.shape}")
    if targets.shape != pred.shape:
        raise DimensionError(
            f"targets shape {targets.shape} does not match predictions {pred.shape}"
        )
    n = pred.shape[0]
    useful_area = np.asarray(useful_area, dtype=float)
    measured_energy = np.asarray(measured_energy, dtype=float)
    if useful_area.shape != (n,) or measured_energy.shape != (n,):
        raise DimensionError(
            f"useful_area and measured_energy must have shape ({n},), got "
            f"{useful_area.shape} and {measured_energy.shape}"
        )
    if len(building_types) != n:
        raise DimensionError(f"expected {n} building types, got {len(building_types)}")
    taus = np.array([consts.time_constant_for(t) for t in building_types])

    mse_z = mse(pred, targets)
    grad_z = 2.0 * (pred - targets) / pred.size

    raw_physical = target_scaler.inverse_transform(pred)
    clamp_mask = raw_physical > 0  # zero subgradient where the floor bites
    physical = np.maximum(raw_physical, 0.0)
    batch = energy_consumption_batch(
        physical, useful_area, taus, consts, with_gradient=True
    )
    reconstructed_scaled = energy_scaler.transform(batch.energy_consumption)
    measured_scaled = energy_scaler.transform(measured_energy)
    diff = reconstructed_scaled - measured_scaled
    mse_y = float(np.mean(diff**2))

    energy_slope = 1.0 / energy_scaler.divisor[0]
    target_slopes = target_scaler.divisor  # (12,): d(physical)/d(scaled)
    grad_y = (
        (2.0 / n)
        * diff[:, None]
        * energy_slope
        * batch.gradient
        * clamp_mask
        * target_slopes[None, :]
    )
    total = mse_z + physics_weight * mse_y
    gradient = grad_z + physics_weight * grad_y

    if not (np.isfinite(total) and np.all(np.isfinite(gradient))):
        bad_rows = ~(
            np.isfinite(batch.energy_consumption)
            & np.isfinite(diff)
            & np.all(np.isfinite(gradient), axis=1)
            & np.all(np.isfinite(pred), axis=1)
        )
        row = int(np.argmax(bad_rows)) if bad_rows.any() else 0
        raise TrainingError(f"non-finite loss contribution at batch row {row}")
    return LossValue(
        total=total, mse_z=mse_z, mse_y=mse_y, gradient_wrt_predictions=gradient
    )
