import logging
import math

from glucose_mbrl.core import EpisodeContext, StepStage
from glucose_mbrl.errors import SimulationError
from glucose_mbrl.metrics import Termination
from glucose_mbrl.simcore import step_patient

logger = logging.getLogger(__name__)


class AdvancePatient(StepStage):
    """
    Advances the patient simulator by one step with this step's insulin and carbs.

    A non-finite simulator state aborts the episode: the context is marked ABORTED with the
    simulator's diagnostic and its glucose and CGM are set to NaN. Only stages that run when
    halted (RecordStep) still see the step.
    """

    def __call__(self, context: EpisodeContext) -> EpisodeContext:
        try:
            context.state, context.true_bg = step_patient(context.state, context.params, context.insulin, context.carbs_now)
        except SimulationError as exc:
            logger.warning("episode aborted at step %d: %s", context.step, exc)
            context.termination = Termination.ABORTED
            context.diagnostic = str(exc)
            context.true_bg = math.nan
            context.cgm = math.nan
        return context
