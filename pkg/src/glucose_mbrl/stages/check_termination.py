from glucose_mbrl.core import EpisodeContext, StepStage
from glucose_mbrl.metrics import Termination

HYPO_LIMIT = 20.0
HYPER_LIMIT = 600.0


class CheckTermination(StepStage):
    """
    Ends the episode when true glucose leaves the survivable range.

    An episode is terminated iff some step's true glucose falls below `lower` or rises above
    `upper`; the step that crosses the bound is the last one logged.

    Args:
        lower: Hypoglycaemia limit, mg/dl.
        upper: Hyperglycaemia limit, mg/dl.

    Raises:
        ValueError: If lower >= upper.
    """

    def __init__(self, lower: float = HYPO_LIMIT, upper: float = HYPER_LIMIT):
        if not lower < upper:
            raise ValueError("lower must be below upper")
        self.lower = lower
        self.upper = upper

    def __call__(self, context: EpisodeContext) -> EpisodeContext:
        if context.true_bg < self.lower:
            context.termination = Termination.HYPO_TERMINATED
        elif context.true_bg > self.upper:
            context.termination = Termination.HYPER_TERMINATED
        return context
