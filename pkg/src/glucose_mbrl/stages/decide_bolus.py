import math

from glucose_mbrl.core import EpisodeContext, StepStage


class DecideBolus(StepStage):
    """
    Asks the agent for this step's bolus.

    The agent sees the latest CGM reading, the carbs eaten at this step (announced only when
    they are eaten) and the insulin delivered in the previous step.

    Raises:
        ValueError: If the agent returns a negative or non-finite bolus.

    Example:
        StepPipe(DecideBolus(), DeliverInsulin(), AdvancePatient())
    """

    def __call__(self, context: EpisodeContext) -> EpisodeContext:
        bolus = float(context.agent.observe(context.cgm, context.carbs_now, context.insulin_prev))
        if not math.isfinite(bolus) or bolus < 0:
            raise ValueError(f"agent {context.agent.name!r} returned an invalid bolus {bolus} at step {context.step}")
        context.bolus = bolus
        return context
