from glucose_mbrl.core import EpisodeContext, StepStage


class ReadCgm(StepStage):
    """Takes the CGM reading of the glucose reached at the end of the step."""

    def __call__(self, context: EpisodeContext) -> EpisodeContext:
        context.cgm = context.sensor.read(context.true_bg)
        return context
