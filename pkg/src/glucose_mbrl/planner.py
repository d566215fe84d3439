"""
Model predictive control over a fixed table of bolus sequences.

Every candidate sequence carries a single bolus (a multiple of the basal rate) at its first step
and nothing afterwards. All candidates are rolled out through the ensemble, scored by the risk
cost, and the first action of the cheapest one is applied. Planning happens every step.
"""

import logging
from dataclasses import dataclass
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from glucose_mbrl.core import EnsembleForecaster
from glucose_mbrl.errors import NotFittedError
from glucose_mbrl.risk import risk_array, risk_margin_profile

logger = logging.getLogger(__name__)

DEFAULT_MULTIPLIERS: Tuple[float, ...] = (0, 5, 10, 20, 40, 80)
DEFAULT_HORIZON = 48
TIE_TOLERANCE = 1e-12


class UncertaintyMode(StrEnum):
    WITH_UNCERTAINTY = "with_uncertainty"
    WITHOUT_UNCERTAINTY = "without_uncertainty"


class ActionTable(BaseModel):
    """Candidate bolus sequences: multiplier * basal_rate at step 1, zero after."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    multipliers: Tuple[float, ...] = DEFAULT_MULTIPLIERS
    horizon: int = Field(default=DEFAULT_HORIZON, ge=1)
    basal_rate: float = Field(gt=0)

    @property
    def first_boluses(self) -> np.ndarray:
        return np.asarray(self.multipliers, dtype=float) * self.basal_rate

    @property
    def sequences(self) -> np.ndarray:
        """(S, horizon) bolus units per step."""
        table = np.zeros((len(self.multipliers), self.horizon))
        table[:, 0] = self.first_boluses
        return table


def build_action_table(basal_rate: float, horizon: int = DEFAULT_HORIZON) -> ActionTable:
    """
    Build the six-sequence action table for a person's basal rate.

    Raises:
        ValueError: If basal_rate is not positive.

    Example:
        build_action_table(0.2).first_boluses   # [0, 1, 2, 4, 8, 16]
    """
    if not basal_rate > 0:
        raise ValueError(f"basal_rate must be positive, got {basal_rate}")
    return ActionTable(basal_rate=basal_rate, horizon=horizon)


@dataclass(frozen=True, eq=False)
class Plan:
    mode: UncertaintyMode
    multipliers: Tuple[float, ...]
    chosen_index: int
    chosen_multiplier: float
    chosen_bolus: float
    per_sequence_costs: np.ndarray
    prediction_matrix: np.ndarray
    risk_margin_profile: np.ndarray
    predictions: np.ndarray

    def explanation(self) -> List[Dict[str, Any]]:
        """Per candidate: what the ensemble expects to happen, and how much the members disagree."""
        rows = []
        for index, multiplier in enumerate(self.multipliers):
            preds = self.predictions[index]
            trajectory = preds.mean(axis=0)
            rows.append(
                {
                    "multiplier": multiplier,
                    "cost": float(self.per_sequence_costs[index]),
                    "mean_bg": float(trajectory.mean()),
                    "min_bg": float(trajectory.min()),
                    "max_bg": float(trajectory.max()),
                    "spread": float(preds.std(axis=0).mean()),
                    "chosen": index == self.chosen_index,
                }
            )
        return rows


def sequence_costs(predictions: np.ndarray, mode: UncertaintyMode) -> np.ndarray:
    """
    Cost of every candidate from (S, M, T) predictions.

    with_uncertainty: mean risk over all M x T predictions.
    without_uncertainty: mean over T of the risk of the ensemble-mean prediction.
    """
    if mode == UncertaintyMode.WITH_UNCERTAINTY:
        return risk_array(predictions).mean(axis=(1, 2))
    return risk_array(predictions.mean(axis=1)).mean(axis=1)


def select_sequence(costs: np.ndarray, tolerance: float = TIE_TOLERANCE) -> int:
    """Index of the cheapest candidate; ties within tolerance go to the lowest index."""
    costs = np.asarray(costs, dtype=float)
    return int(np.flatnonzero(costs <= costs.min() + tolerance)[0])


def plan(
    ensemble: EnsembleForecaster,
    table: ActionTable,
    mode: UncertaintyMode | str = UncertaintyMode.WITH_UNCERTAINTY,
    carbs_now: float = 0.0,
) -> Plan:
    """
    Score every candidate sequence and choose one.

    Carbs announced at the current step enter the first step of every candidate; future carbs
    are assumed to be zero. The ensemble's live state is not modified.

    Raises:
        NotFittedError: If the ensemble has not been fitted.
    """
    if not ensemble.is_fitted:
        raise NotFittedError("cannot plan with an unfitted ensemble")
    mode = UncertaintyMode(mode)
    assumed_carbs = np.zeros(table.horizon)
    assumed_carbs[0] = carbs_now

    predictions = ensemble.rollout_batch(table.sequences, assumed_carbs)
    costs = sequence_costs(predictions, mode)
    index = select_sequence(costs)
    chosen = predictions[index]
    result = Plan(
        mode=mode,
        multipliers=table.multipliers,
        chosen_index=index,
        chosen_multiplier=table.multipliers[index],
        chosen_bolus=float(table.first_boluses[index]),
        per_sequence_costs=costs,
        prediction_matrix=chosen,
        risk_margin_profile=risk_margin_profile(chosen),
        predictions=predictions,
    )
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug("plan %s: chose x%s", mode.value, result.chosen_multiplier)
        for row in result.explanation():
            logger.debug(
                "  x%-3s cost=%.4f mean_bg=%.1f range=[%.1f, %.1f] spread=%.2f%s",
                row["multiplier"],
                row["cost"],
                row["mean_bg"],
                row["min_bg"],
                row["max_bg"],
                row["spread"],
                " *" if row["chosen"] else "",
            )
    return result


def act(plan: Plan) -> float:
    """The first-step bolus of the chosen sequence."""
    return plan.chosen_bolus
