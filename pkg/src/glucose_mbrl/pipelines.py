from glucose_mbrl.core import StepPipe, StepStage
from glucose_mbrl.stages import AdvancePatient, CheckTermination, DecideBolus, DeliverInsulin, ReadCgm, RecordStep


def basic_step_pipeline(*stages: StepStage) -> StepPipe:
    """
    Helper function to create a complete environment step pipeline.

    Wraps the given stages between the agent decision and the physics: DecideBolus and
    DeliverInsulin run first, then the extra stages, then AdvancePatient, ReadCgm,
    CheckTermination and RecordStep.

    Args:
        *stages: Extra stages run after insulin delivery is set and before the patient advances

    Returns:
        Complete StepPipe ready for use with run_episode

    Example:
        ```python
        from glucose_mbrl.pipelines import basic_step_pipeline
        from glucose_mbrl.stages import DeliverInsulin

        # A person whose pump delivers no basal insulin
        no_basal = basic_step_pipeline().replace(1, DeliverInsulin(basal_override=0.0))
        log = run_episode(agent, params, config, pipeline=no_basal)
        ```
    """

    return StepPipe(DecideBolus(), DeliverInsulin(), *stages, AdvancePatient(), ReadCgm(), CheckTermination(), RecordStep())
