from typing import Any, Callable, List, Protocol, Tuple, Union

import numpy as np

from glucose_mbrl.metrics import StepRecord, Termination
from glucose_mbrl.simcore import STEPS_PER_DAY, CgmSensor, PatientParams, PatientState


class StepPipe:
    """
    Used to compose one environment step by chaining stages.
    Each stage takes the EpisodeContext, mutates it and returns it.

    This is an immutable pipeline that holds an ordered tuple of stages (callables).
    Supports list-like operations but returns new instances for immutability.
    Once a stage halts the context (e.g. an aborted simulation), the remaining stages are skipped
    except those with a true `runs_when_halted` attribute.
    """

    def __init__(self, *stages: Callable):
        self._stages: Tuple[Callable, ...] = tuple(stages)

    def __call__(self, context: Any) -> Any:
        """Execute the stages sequentially on the context"""
        for stage in self._stages:
            if getattr(context, "halted", False) and not getattr(stage, "runs_when_halted", False):
                continue
            context = stage(context)
        return context

    def append(self, stage: Callable) -> "StepPipe":
        """Return a new pipeline with the stage appended"""
        return StepPipe(*self._stages, stage)

    def insert(self, index: int, stage: Callable) -> "StepPipe":
        """Return a new pipeline with the stage inserted at the given index"""
        stages = list(self._stages)
        stages.insert(index, stage)
        return StepPipe(*stages)

    def replace(self, index: int, stage: Callable) -> "StepPipe":
        """Return a new pipeline with the stage at index replaced"""
        stages = list(self._stages)
        stages[index] = stage
        return StepPipe(*stages)

    def __getitem__(self, key: Union[int, slice]) -> Union[Callable, "StepPipe"]:
        if isinstance(key, slice):
            return StepPipe(*self._stages[key])
        return self._stages[key]

    def __len__(self) -> int:
        return len(self._stages)

    def __iter__(self):
        return iter(self._stages)

    def __repr__(self) -> str:
        return f"StepPipe({', '.join(type(stage).__name__ for stage in self._stages)})"


class Agent(Protocol):
    """
    A dosing policy. Each step it sees the CGM reading, the carbs eaten now and the insulin
    delivered in the previous step, and returns a bolus (units). Basal is delivered separately.
    """

    name: str
    last_plan: Any

    def start_episode(self) -> None: ...

    def observe(self, cgm: float, carbs: float, insulin_prev: float) -> float: ...

    def end_episode(self, log: Any) -> None: ...


class EnsembleForecaster(Protocol):
    """What the planner needs from a dynamics model ensemble."""

    @property
    def is_fitted(self) -> bool: ...

    def rollout_batch(self, actions: np.ndarray, assumed_carbs: np.ndarray) -> np.ndarray: ...


class EpisodeContext:
    """Mutable state of one episode, threaded through the step stages."""

    params: PatientParams
    agent: Agent
    carbs: np.ndarray
    sensor: CgmSensor
    state: PatientState

    def __init__(
        self,
        params: PatientParams,
        agent: Agent,
        carbs: np.ndarray,
        sensor: CgmSensor,
        state: PatientState,
        steps: int = STEPS_PER_DAY,
    ):
        self.params = params
        self.agent = agent
        self.carbs = carbs
        self.sensor = sensor
        self.state = state
        self.steps = steps
        self.step = 0
        self.true_bg = state.plasma_glucose
        self.cgm = sensor.read(state.plasma_glucose)
        self.insulin_prev = params.basal_rate
        self.bolus = 0.0
        self.basal = params.basal_rate
        self.termination: Termination | None = None
        self.diagnostic: str | None = None
        self.records: List[StepRecord] = []

    @property
    def carbs_now(self) -> float:
        return float(self.carbs[self.step])

    @property
    def insulin(self) -> float:
        return self.basal + self.bolus

    @property
    def halted(self) -> bool:
        return self.termination == Termination.ABORTED

    @property
    def finished(self) -> bool:
        return self.termination is not None

    @property
    def minute_of_day(self) -> int:
        return int((360 + 5 * self.step) % 1440)

    def next_step(self) -> None:
        """Move the clock forward; completes the episode at the end of the day."""
        self.insulin_prev = self.insulin
        self.step += 1
        if self.termination is None and self.step >= self.steps:
            self.termination = Termination.COMPLETED


class StepStage(Protocol):
    def __call__(self, context: EpisodeContext) -> EpisodeContext: ...
