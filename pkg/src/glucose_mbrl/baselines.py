"""Basal-Bolus reference controller."""

from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from glucose_mbrl.simcore import PatientParams, load_profile_file

CORRECTION_THRESHOLD = 150.0


class BbParams(BaseModel):
    """
    Basal-Bolus therapy constants.

    Attributes:
        bas: Basal insulin, units per step.
        cr: Carbohydrate ratio, grams covered by one unit.
        cf: Correction factor, mg/dl lowered by one unit.
        b_tgt: Target glucose for corrections, mg/dl.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    bas: float = Field(ge=0)
    cr: float = Field(gt=0)
    cf: float = Field(gt=0)
    b_tgt: float = Field(default=120.0, gt=0)


def bb_dose(params: BbParams, b_t: float, c_t: float) -> float:
    """
    Total insulin for this step: bas + [c_t > 0] * (c_t / CR + [b_t > 150] * (b_t - b_tgt) / CF).

    The correction term only applies together with a meal.

    Raises:
        ValueError: If b_t is not positive or c_t is negative.

    Example:
        bb_dose(BbParams(bas=0.2, cr=10, cf=40), b_t=200, c_t=70)   # 9.2
    """
    if not b_t > 0:
        raise ValueError(f"b_t must be a positive glucose reading, got {b_t}")
    if c_t < 0:
        raise ValueError(f"c_t must be non-negative, got {c_t}")
    dose = params.bas
    if c_t > 0:
        dose += c_t / params.cr
        if b_t > CORRECTION_THRESHOLD:
            dose += (b_t - params.b_tgt) / params.cf
    return dose


def bb_params_for(params: PatientParams) -> BbParams:
    """
    Basal-Bolus constants for a patient, from the rules in profiles.yaml.

    The carbohydrate ratio balances the glucose appearing from a meal against the glucose
    removed by a bolus at equilibrium; the correction factor is a fixed multiple of it.
    Per-profile overrides in the file take precedence.
    """
    rules = load_profile_file()["basal_bolus"]
    area_per_unit = params.equilibrium_bg * params.insulin_sensitivity / params.insulin_clearance_rate
    grams_per_unit = area_per_unit * params.glucose_volume / (params.carb_bioavailability * 1000.0)
    cr = float(rules["cr_scale"]) * grams_per_unit
    values: dict[str, Any] = {
        "bas": params.basal_rate,
        "cr": cr,
        "cf": float(rules["cf_per_cr"]) * cr,
        "b_tgt": float(rules["target_bg"]),
    }
    values.update((rules.get("overrides") or {}).get(params.profile_id, {}))
    return BbParams(**values)


class BasalBolusAgent:
    """Doses by the Basal-Bolus rule; returns only the bolus part, basal is delivered separately."""

    name = "bb"

    def __init__(self, params: BbParams):
        self.params = params
        self.last_plan = None

    def start_episode(self) -> None:
        pass

    def observe(self, cgm: float, carbs: float, insulin_prev: float) -> float:
        return max(0.0, bb_dose(self.params, cgm, carbs) - self.params.bas)

    def end_episode(self, log) -> None:
        pass
