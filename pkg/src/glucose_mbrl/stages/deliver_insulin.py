from glucose_mbrl.core import EpisodeContext, StepStage


class DeliverInsulin(StepStage):
    """
    Sets the basal insulin delivered alongside the agent's bolus.

    By default the patient's basal rate is delivered every step. basal_override replaces it,
    e.g. 0.0 to simulate withheld basal insulin.

    Args:
        basal_override: Basal units per step to deliver instead of the patient's basal rate.

    Raises:
        ValueError: If basal_override is negative.

    Example:
        basic_step_pipeline().replace(1, DeliverInsulin(basal_override=0.0))
    """

    def __init__(self, basal_override: float | None = None):
        if basal_override is not None and basal_override < 0:
            raise ValueError(f"basal_override must be non-negative, got {basal_override}")
        self.basal_override = basal_override

    def __call__(self, context: EpisodeContext) -> EpisodeContext:
        context.basal = context.params.basal_rate if self.basal_override is None else self.basal_override
        return context
