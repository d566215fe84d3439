"""
The model-based learning agent: an ESN ensemble learns the glucose response online and an MPC
planner doses from its forecasts.

The first `bootstrap_episodes` episodes are driven by the Basal-Bolus controller so the ensemble
has data before the planner takes over; the ensemble keeps learning from every episode.
"""

import logging

from glucose_mbrl.baselines import BasalBolusAgent, BbParams, bb_params_for
from glucose_mbrl.esn import EsnEnsemble, EsnHyper, Normalizer
from glucose_mbrl.metrics import EpisodeLog, Termination
from glucose_mbrl.planner import DEFAULT_HORIZON, Plan, UncertaintyMode, act, build_action_table, plan
from glucose_mbrl.simcore import PatientParams

logger = logging.getLogger(__name__)


class MbrlAgent:
    """
    Ensemble-ESN model predictive controller.

    Step timing: observe() first pairs the features of the previous step with the glucose just
    read, then decides a bolus from the ensemble's live state, then advances the live state with
    the realized (bolus, carbs). end_episode() supplies the final target and refits all readouts.

    Args:
        params: The person being dosed; sets the action table and input scaling.
        mode: Whether plans are scored with the ensemble spread or on the ensemble mean.
        hyper: Reservoir hyperparameters.
        horizon: Planning horizon in steps.
        ensemble_size: Number of reservoirs.
        seed: Seed the member reservoirs are drawn from.
        bootstrap_episodes: Leading episodes dosed by the Basal-Bolus controller.
        bb_params: Basal-Bolus constants for the bootstrap; derived from params when None.
    """

    def __init__(
        self,
        params: PatientParams,
        mode: UncertaintyMode | str = UncertaintyMode.WITH_UNCERTAINTY,
        hyper: EsnHyper | None = None,
        horizon: int = DEFAULT_HORIZON,
        ensemble_size: int = 5,
        seed: int = 0,
        bootstrap_episodes: int = 5,
        bb_params: BbParams | None = None,
    ):
        if bootstrap_episodes < 0:
            raise ValueError(f"bootstrap_episodes must be non-negative, got {bootstrap_episodes}")
        self.mode = UncertaintyMode(mode)
        self.name = f"mbrl_{self.mode.value}"
        self.table = build_action_table(params.basal_rate, horizon)
        self.ensemble = EsnEnsemble.create(hyper or EsnHyper(), ensemble_size, seed, Normalizer.for_basal(params.basal_rate))
        self.bootstrap = BasalBolusAgent(bb_params or bb_params_for(params))
        self.bootstrap_episodes = bootstrap_episodes
        self.episodes_seen = 0
        self.last_plan: Plan | None = None

    @property
    def bootstrapping(self) -> bool:
        return self.episodes_seen < self.bootstrap_episodes or not self.ensemble.is_fitted

    def start_episode(self) -> None:
        self.ensemble.start_episode()
        self.last_plan = None
        if self.episodes_seen == self.bootstrap_episodes and self.ensemble.is_fitted:
            logger.info("%s: planner takes over from the Basal-Bolus bootstrap at episode %d", self.name, self.episodes_seen)

    def observe(self, cgm: float, carbs: float, insulin_prev: float) -> float:
        self.ensemble.record_target(cgm)
        if self.bootstrapping:
            self.last_plan = None
            bolus = self.bootstrap.observe(cgm, carbs, insulin_prev)
        else:
            self.last_plan = plan(self.ensemble, self.table, self.mode, carbs_now=carbs)
            bolus = act(self.last_plan)
        self.ensemble.advance(bolus, carbs)
        return bolus

    def end_episode(self, log: EpisodeLog) -> None:
        # the aborted step records a NaN reading, which is no target
        if log.records and log.termination != Termination.ABORTED:
            self.ensemble.record_target(log.records[-1].cgm)
        self.ensemble.fit()
        self.episodes_seen += 1
