import math

from glucose_mbrl.core import EpisodeContext, StepStage
from glucose_mbrl.metrics import StepRecord
from glucose_mbrl.risk import risk


class RecordStep(StepStage):
    """
    Appends the step's StepRecord to the context, with a plan summary when the agent planned.

    It also runs on a halted step, so an aborted episode ends with a row whose glucose and cost are NaN.

    Example:
        # Log every step, including the planner's per-candidate costs
        StepPipe(DecideBolus(), DeliverInsulin(), AdvancePatient(), ReadCgm(), CheckTermination(), RecordStep())
    """

    runs_when_halted = True

    def __call__(self, context: EpisodeContext) -> EpisodeContext:
        plan = getattr(context.agent, "last_plan", None)
        summary = {}
        if plan is not None:
            summary = {
                "chosen_multiplier": float(plan.chosen_multiplier),
                "sequence_costs": tuple(float(c) for c in plan.per_sequence_costs),
                "mean_risk_margin": float(plan.risk_margin_profile.mean()),
            }
        context.records.append(
            StepRecord(
                step=context.step,
                minute_of_day=context.minute_of_day,
                true_bg=context.true_bg,
                cgm=context.cgm,
                carbs_g=context.carbs_now,
                bolus_u=context.bolus,
                basal_u=context.basal,
                cost=risk(context.true_bg) if math.isfinite(context.true_bg) else math.nan,
                **summary,
            )
        )
        return context
