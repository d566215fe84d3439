"""
Compartmental glucose-insulin simulator.

A Bergman-minimal-model style system with three sub-models:

    gut (two-stage carbohydrate absorption)
        dQ1/dt = -k_abs * Q1                      carbs ingested land in Q1
        dQ2/dt =  k_abs * (Q1 - Q2)
        Ra     =  f * k_abs * Q2 * 1000 / V       rate of appearance, mg/dl/min

    insulin kinetics (plasma insulin and remote effect)
        dI/dt  =  r(t) - n * I                    r: delivered insulin, units/min
        dX/dt  =  k_a * (S * I - X)

    glucose kinetics
        dG/dt  =  EGP - (p1 + X) * G + Ra

EGP is solved from the fixed point: with constant basal delivery and no carbs the system rests at
equilibrium_bg. Each 5-minute environment step is integrated with classical RK4 on 1-minute
substeps; glucose is clamped to [1, 1000] mg/dl after every substep.
"""

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Dict, List, Literal, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field

from glucose_mbrl.errors import SimulationError
from glucose_mbrl.risk import BG_CEILING, BG_FLOOR

STEP_MINUTES = 5.0
SUBSTEP_MINUTES = 1.0
STEPS_PER_DAY = 288

GROUPS: Tuple[str, ...] = ("child", "adolescent", "adult")
PROFILE_INDICES = (1, 2, 3)
DEFAULT_PROFILE = "adult#001"

Group = Literal["child", "adolescent", "adult"]

_PROFILE_RE = re.compile(r"^(child|adolescent|adult)#0*([1-9][0-9]*)$")


class PatientParams(BaseModel):
    """Physiology of one virtual person. endogenous_production is derived, not set."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    profile_id: str = "custom"
    body_mass: float = Field(gt=0)
    basal_rate: float = Field(gt=0)
    insulin_sensitivity: float = Field(gt=0)
    carb_absorption_rate: float = Field(gt=0)
    insulin_action_rate: float = Field(gt=0)
    insulin_clearance_rate: float = Field(gt=0)
    glucose_self_regulation: float = Field(gt=0)
    equilibrium_bg: float = Field(default=120.0, ge=90.0, le=140.0)
    glucose_volume_per_kg: float = Field(default=1.9, gt=0)
    carb_bioavailability: float = Field(default=0.9, gt=0, le=1.0)

    @property
    def glucose_volume(self) -> float:
        """Glucose distribution volume in dl."""
        return self.glucose_volume_per_kg * self.body_mass

    @property
    def basal_plasma_insulin(self) -> float:
        return self.basal_rate / STEP_MINUTES / self.insulin_clearance_rate

    @property
    def basal_insulin_effect(self) -> float:
        return self.insulin_sensitivity * self.basal_plasma_insulin

    @property
    def endogenous_production(self) -> float:
        """mg/dl/min, balancing clearance at equilibrium_bg under basal insulin."""
        return (self.glucose_self_regulation + self.basal_insulin_effect) * self.equilibrium_bg


class PatientState(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    plasma_glucose: float = Field(gt=0)
    remote_insulin_effect: float
    plasma_insulin: float
    gut_carbs_1: float = Field(default=0.0, ge=0)
    gut_carbs_2: float = Field(default=0.0, ge=0)

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.plasma_glucose, self.remote_insulin_effect, self.plasma_insulin, self.gut_carbs_1, self.gut_carbs_2],
            dtype=float,
        )

    @classmethod
    def from_array(cls, values: np.ndarray) -> "PatientState":
        g, x, i, q1, q2 = (float(v) for v in values)
        return cls(plasma_glucose=g, remote_insulin_effect=x, plasma_insulin=i, gut_carbs_1=q1, gut_carbs_2=q2)


class CgmConfig(BaseModel):
    """CGM sensor noise. With noise_std 0 the reading equals the true glucose."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    noise_std: float = Field(default=0.0, ge=0)
    noise_correlation: float = Field(default=0.7, ge=0, lt=1)
    seed: int = 0


# --- profiles -------------------------------------------------------------------------------


@lru_cache(maxsize=1)
def load_profile_file() -> Dict[str, Any]:
    """Parsed contents of the shipped profiles.yaml."""
    text = resources.files("glucose_mbrl").joinpath("data/profiles.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def format_profile_id(group: str, index: int) -> str:
    return f"{group}#{index:03d}"


def parse_profile_id(profile_id: str) -> Tuple[str, int]:
    """
    Split a profile id into (group, index).

    Accepts both 'adult#001' and 'adult#1'.

    Raises:
        ValueError: If the id is not '<child|adolescent|adult>#<1..3>'.
    """
    match = _PROFILE_RE.match(profile_id.strip())
    if match is None:
        raise ValueError(f"invalid profile id {profile_id!r}, expected e.g. 'adult#001'")
    group, index = match.group(1), int(match.group(2))
    if index not in PROFILE_INDICES:
        raise ValueError(f"profile index must be one of {PROFILE_INDICES}, got {index}")
    return group, index


def make_profile(group: Group, index: int) -> PatientParams:
    """
    Build the parameters of one of the nine virtual people.

    Index 1 is the group template; indices 2 and 3 are perturbed by a fixed per-profile seed,
    so the result is deterministic.

    Raises:
        ValueError: On an unknown group or an index outside 1..3.

    Example:
        make_profile("adult", 1).equilibrium_bg   # 120.0
    """
    if group not in GROUPS:
        raise ValueError(f"group must be one of {GROUPS}, got {group!r}")
    if index not in PROFILE_INDICES:
        raise ValueError(f"profile index must be one of {PROFILE_INDICES}, got {index}")

    spec = load_profile_file()
    fields = dict(spec["templates"][group])
    if index > 1:
        perturbation = spec["perturbation"]
        spread = float(perturbation["spread"])
        rng = np.random.default_rng(int(perturbation["seed"]) + 10 * GROUPS.index(group) + index)
        factors = rng.uniform(1.0 - spread, 1.0 + spread, size=len(perturbation["perturbed"]))
        for name, factor in zip(perturbation["perturbed"], factors):
            fields[name] = float(fields[name]) * float(factor)
    return PatientParams(profile_id=format_profile_id(group, index), **fields)


def profile_by_id(profile_id: str) -> PatientParams:
    group, index = parse_profile_id(profile_id)
    return make_profile(group, index)  # type: ignore[arg-type]


def all_profiles() -> List[str]:
    return [format_profile_id(group, index) for group in GROUPS for index in PROFILE_INDICES]


# --- dynamics -------------------------------------------------------------------------------


def steady_state(params: PatientParams) -> PatientState:
    """Fixed point under constant basal insulin and zero carbs."""
    return PatientState(
        plasma_glucose=params.equilibrium_bg,
        remote_insulin_effect=params.basal_insulin_effect,
        plasma_insulin=params.basal_plasma_insulin,
        gut_carbs_1=0.0,
        gut_carbs_2=0.0,
    )


def _derivatives(y: np.ndarray, params: PatientParams, insulin_rate: float, egp: float) -> np.ndarray:
    g, x, i, q1, q2 = y
    k_abs = params.carb_absorption_rate
    appearance = params.carb_bioavailability * k_abs * q2 * 1000.0 / params.glucose_volume
    return np.array(
        [
            egp - (params.glucose_self_regulation + x) * g + appearance,
            params.insulin_action_rate * (params.insulin_sensitivity * i - x),
            insulin_rate - params.insulin_clearance_rate * i,
            -k_abs * q1,
            k_abs * (q1 - q2),
        ]
    )


def _rk4(y: np.ndarray, h: float, params: PatientParams, insulin_rate: float, egp: float) -> np.ndarray:
    k1 = _derivatives(y, params, insulin_rate, egp)
    k2 = _derivatives(y + 0.5 * h * k1, params, insulin_rate, egp)
    k3 = _derivatives(y + 0.5 * h * k2, params, insulin_rate, egp)
    k4 = _derivatives(y + h * k3, params, insulin_rate, egp)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_patient(
    state: PatientState,
    params: PatientParams,
    insulin: float,
    carbs: float,
    dt: float = STEP_MINUTES,
) -> Tuple[PatientState, float]:
    """
    Advance the patient by one environment step.

    Args:
        state: Current patient state.
        params: Patient physiology.
        insulin: Insulin units delivered uniformly over the step (basal + bolus).
        carbs: Grams ingested at the start of the step.
        dt: Step length in minutes, a whole number of 1-minute substeps.

    Returns:
        (new_state, true_bg) with true_bg the new plasma glucose in mg/dl.

    Raises:
        ValueError: On negative or non-finite inputs or a step that is not a whole number of substeps.
        SimulationError: If the integration produces a non-finite state.
    """
    if not math.isfinite(insulin) or insulin < 0:
        raise ValueError(f"insulin must be a non-negative finite dose, got {insulin}")
    if not math.isfinite(carbs) or carbs < 0:
        raise ValueError(f"carbs must be non-negative and finite, got {carbs}")
    substeps = dt / SUBSTEP_MINUTES
    if dt <= 0 or abs(substeps - round(substeps)) > 1e-9:
        raise ValueError(f"dt must be a positive multiple of {SUBSTEP_MINUTES} min, got {dt}")

    y = state.to_array()
    y[3] += carbs
    insulin_rate = insulin / dt
    egp = params.endogenous_production
    for _ in range(int(round(substeps))):
        y = _rk4(y, SUBSTEP_MINUTES, params, insulin_rate, egp)
        if not np.all(np.isfinite(y)):
            diagnostic = dict(zip(PatientState.model_fields, y.tolist()))
            raise SimulationError(f"non-finite patient state for {params.profile_id}: {diagnostic}", diagnostic)
        y[0] = min(max(y[0], BG_FLOOR), BG_CEILING)
        y[3] = max(y[3], 0.0)
        y[4] = max(y[4], 0.0)

    new_state = PatientState.from_array(y)
    return new_state, new_state.plasma_glucose


# --- CGM ------------------------------------------------------------------------------------


@dataclass
class CgmNoiseState:
    """Per-episode noise stream: the generator and the last AR(1) noise value."""

    rng: np.random.Generator
    previous: float | None = None


def read_cgm(true_bg: float, cgm: CgmConfig, rng_state: CgmNoiseState) -> float:
    """
    CGM reading: true glucose plus first-order autocorrelated Gaussian noise.

    The noise is stationary with standard deviation noise_std. With noise_std 0 the true
    glucose is returned unchanged and the generator is not touched.

    Raises:
        ValueError: If true_bg is not positive.
    """
    if not true_bg > 0:
        raise ValueError(f"true_bg must be positive, got {true_bg}")
    if cgm.noise_std == 0:
        return float(true_bg)

    if rng_state.previous is None:
        noise = rng_state.rng.normal(0.0, cgm.noise_std)
    else:
        phi = cgm.noise_correlation
        innovation = rng_state.rng.normal(0.0, cgm.noise_std * math.sqrt(1.0 - phi * phi))
        noise = phi * rng_state.previous + innovation
    rng_state.previous = float(noise)
    return max(BG_FLOOR, float(true_bg + noise))


class CgmSensor:
    """A CGM device for one episode; owns its noise stream."""

    def __init__(self, config: CgmConfig, *stream_key: int):
        self.config = config
        self.state = CgmNoiseState(rng=np.random.default_rng([config.seed, *stream_key]))

    def read(self, true_bg: float) -> float:
        return read_cgm(true_bg, self.config, self.state)
