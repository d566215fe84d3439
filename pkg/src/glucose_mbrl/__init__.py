"""
Glucose MBRL

A workbench for closed-loop blood glucose control: an ensemble of echo state networks learns a
person's glucose response online, and a model predictive controller doses bolus insulin from its
forecasts. The Basal-Bolus controller serves as the baseline.

Basic Usage:
    ```python
    from glucose_mbrl import ExperimentConfig, train_and_evaluate

    report = train_and_evaluate(ExperimentConfig(profile_id="adult#001", agent="bb"))
    print(report.completion_rate_pct, report.time_in_range_pct)
    ```

Advanced Usage:
    ```python
    from glucose_mbrl import BasalBolusAgent, StepPipe, bb_params_for, profile_by_id, run_episode
    from glucose_mbrl.stages import *

    params = profile_by_id("adult#001")
    no_basal = StepPipe(
        DecideBolus(),
        DeliverInsulin(basal_override=0.0),
        AdvancePatient(),
        ReadCgm(),
        CheckTermination(),
        RecordStep(),
    )
    log = run_episode(BasalBolusAgent(bb_params_for(params)), params, config, pipeline=no_basal)
    ```
"""

from glucose_mbrl.baselines import BasalBolusAgent, BbParams, bb_dose, bb_params_for
from glucose_mbrl.config import AgentKind, ExperimentConfig, load_config
from glucose_mbrl.core import Agent, EpisodeContext, StepPipe
from glucose_mbrl.errors import ConfigError, NotFittedError, SimulationError
from glucose_mbrl.esn import EsnEnsemble, EsnHyper
from glucose_mbrl.harness import compare_uncertainty_modes, run_episode, sweep, train_and_evaluate
from glucose_mbrl.mbrl import MbrlAgent
from glucose_mbrl.metrics import EpisodeLog, MetricsReport, Termination
from glucose_mbrl.pipelines import basic_step_pipeline
from glucose_mbrl.planner import UncertaintyMode, plan
from glucose_mbrl.simcore import PatientParams, make_profile, profile_by_id
