"""
Episode loop, training schedule and experiment orchestration.

An episode is one simulated day starting at 06:00, in 288 steps of five minutes. Meals are drawn
when the episode starts and announced to the agent only at the step they are eaten. The episode
ends early when true glucose leaves [20, 600] mg/dl.

Every random stream derives from the config seed: meals from (seed, episode), sensor noise from
(cgm seed, seed, episode), reservoirs from the seed itself.
"""

import logging
import statistics
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from glucose_mbrl.baselines import BasalBolusAgent, bb_params_for
from glucose_mbrl.config import AgentKind, ExperimentConfig
from glucose_mbrl.core import Agent, EpisodeContext, StepPipe
from glucose_mbrl.field_ops import modify_config
from glucose_mbrl.mbrl import MbrlAgent
from glucose_mbrl.mealgen import carbs_per_step, sample_day
from glucose_mbrl.metrics import EpisodeLog, MetricsReport, summarize
from glucose_mbrl.pipelines import basic_step_pipeline
from glucose_mbrl.planner import UncertaintyMode
from glucose_mbrl.simcore import CgmSensor, PatientParams, profile_by_id, steady_state

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.json"


def build_agent(config: ExperimentConfig, params: PatientParams) -> Agent:
    """Fresh, untrained agent of the configured kind for one person."""
    if config.agent == AgentKind.BB:
        return BasalBolusAgent(bb_params_for(params))
    mode = UncertaintyMode.WITH_UNCERTAINTY if config.agent == AgentKind.MBRL_WITH_UNCERTAINTY else UncertaintyMode.WITHOUT_UNCERTAINTY
    return MbrlAgent(
        params,
        mode=mode,
        hyper=config.esn,
        horizon=config.horizon,
        ensemble_size=config.ensemble_size,
        seed=config.seed,
        bootstrap_episodes=config.bootstrap_episodes,
    )


def run_episode(
    agent: Agent,
    params: PatientParams,
    config: ExperimentConfig,
    rng: np.random.Generator | None = None,
    episode: int = 0,
    pipeline: StepPipe | None = None,
) -> EpisodeLog:
    """
    Simulate one day of closed-loop dosing.

    Args:
        agent: The dosing policy; its start_episode/end_episode hooks are called here.
        params: The virtual person.
        config: Supplies meal table, sensor noise and seed.
        rng: Meal-sampling stream; defaults to one derived from (config.seed, episode).
        episode: Episode index, used in the log and for the default random streams.
        pipeline: Step pipeline; defaults to basic_step_pipeline().

    Returns:
        The episode's log. The agent has already seen it through end_episode.
    """
    pipeline = pipeline or basic_step_pipeline()
    rng = rng if rng is not None else np.random.default_rng([config.seed, episode])
    meals = sample_day(config.meal_specs(), rng)
    sensor = CgmSensor(config.cgm, config.seed, episode)

    agent.start_episode()
    context = EpisodeContext(params, agent, carbs_per_step(meals), sensor, steady_state(params))
    while not context.finished:
        context = pipeline(context)
        context.next_step()

    log = EpisodeLog(
        episode=episode,
        profile_id=params.profile_id,
        agent=agent.name,
        termination=context.termination,
        duration_steps=len(context.records),
        records=context.records,
        meals=meals,
        planned=any(record.chosen_multiplier is not None for record in context.records),
        diagnostic=context.diagnostic,
    )
    agent.end_episode(log)
    logger.info("%s %s episode %d: %s after %d steps", params.profile_id, agent.name, episode, log.termination.value, log.duration_steps)
    return log


def run_training(config: ExperimentConfig, pipeline: StepPipe | None = None) -> List[EpisodeLog]:
    """
    Run the configured number of episodes with one agent that learns across them.

    Per-episode CSV logs are written to config.output_dir when it is set.
    """
    params = profile_by_id(config.profile_id)
    agent = build_agent(config, params)
    if config.output_dir is not None:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)

    logs = []
    for episode in range(config.resolved_episodes):
        log = run_episode(agent, params, config, episode=episode, pipeline=pipeline)
        if config.output_dir is not None:
            log.write_csv(Path(config.output_dir) / f"episode_{episode:03d}.csv")
        logs.append(log)
    return logs


def train_and_evaluate(config: ExperimentConfig) -> MetricsReport:
    """
    Train per the agent's schedule and reduce the run to a MetricsReport.

    Completion rate covers the last evaluation_window episodes; time in range covers the last
    tir_window completed episodes and is absent when none completed. The report is written to
    metrics.json under config.output_dir when it is set.
    """
    logs = run_training(config)
    bootstrap = min(config.bootstrap_episodes, len(logs)) if config.agent.is_mbrl else 0
    report = summarize(
        logs,
        profile_id=config.profile_id,
        agent=config.agent.value,
        seed=config.seed,
        evaluation_window=config.evaluation_window,
        tir_window=config.tir_window,
        bootstrap_episodes=bootstrap,
    )
    if config.output_dir is not None:
        (Path(config.output_dir) / METRICS_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(
        "%s %s: completion %.1f%%, TIR %s",
        report.profile_id,
        report.agent,
        report.completion_rate_pct,
        "n/a" if report.time_in_range_pct is None else f"{report.time_in_range_pct:.1f}%",
    )
    return report


class LearningCurves(BaseModel):
    """Per-seed reports of both MBRL modes, run on the same seeds."""

    model_config = ConfigDict(extra="forbid")

    seeds: List[int]
    episodes: int
    reports: Dict[UncertaintyMode, List[MetricsReport]]

    def first_full_episodes(self, mode: UncertaintyMode | str) -> List[int | None]:
        return [report.first_full_episode for report in self.reports[UncertaintyMode(mode)]]

    def median_first_full_episode(self, mode: UncertaintyMode | str) -> float:
        """Median over seeds; a seed that never completed a day counts as `episodes`."""
        return statistics.median(self.episodes if index is None else index for index in self.first_full_episodes(mode))

    def to_frame(self) -> pd.DataFrame:
        """Long-format curves: one row per (mode, seed, episode)."""
        rows = []
        for mode, reports in self.reports.items():
            for report in reports:
                for episode, (duration, tir) in enumerate(zip(report.durations, report.tir_per_episode)):
                    rows.append(
                        {
                            "mode": mode.value,
                            "seed": report.seed,
                            "episode": episode,
                            "duration_steps": duration,
                            "time_in_range_pct": tir,
                            "first_full_episode": report.first_full_episode,
                        }
                    )
        return pd.DataFrame(rows, columns=["mode", "seed", "episode", "duration_steps", "time_in_range_pct", "first_full_episode"])


def compare_uncertainty_modes(config: ExperimentConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4)) -> LearningCurves:
    """
    Train both MBRL modes on the same seeds and collect their learning curves.

    Raises:
        ValueError: If seeds is empty.
    """
    if not seeds:
        raise ValueError("compare_uncertainty_modes needs at least one seed")
    reports: Dict[UncertaintyMode, List[MetricsReport]] = {}
    for mode in UncertaintyMode:
        kind = AgentKind(f"mbrl_{mode.value}")
        reports[mode] = [train_and_evaluate(modify_config(config, agent=kind, seed=seed, output_dir=_cell_dir(config, kind, seed))) for seed in seeds]
    episodes = modify_config(config, agent=AgentKind.MBRL_WITH_UNCERTAINTY).resolved_episodes
    curves = LearningCurves(seeds=list(seeds), episodes=episodes, reports=reports)
    for mode in UncertaintyMode:
        logger.info("%s: median first full episode %.1f", mode.value, curves.median_first_full_episode(mode))
    return curves


def sweep(config: ExperimentConfig, profiles: Iterable[str], agents: Iterable[AgentKind | str], jobs: int = 1) -> List[MetricsReport]:
    """
    Run train_and_evaluate for every (profile, agent) cell.

    Cells keep the config seed, so all agents on a profile see the same meals. With jobs > 1 the
    cells run in a process pool; the result order is the cell order either way.

    Raises:
        ValueError: If jobs < 1 or there are no cells.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    cells = [
        modify_config(config, profile_id=profile, agent=AgentKind(agent), output_dir=_cell_dir(config, AgentKind(agent), config.seed, profile))
        for profile in profiles
        for agent in agents
    ]
    if not cells:
        raise ValueError("sweep needs at least one profile and one agent")

    if jobs == 1:
        reports = [train_and_evaluate(cell) for cell in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(train_and_evaluate, cells))
    for report in reports:
        logger.info("sweep cell %s/%s done", report.profile_id, report.agent)
    return reports


def _cell_dir(config: ExperimentConfig, agent: AgentKind, seed: int, profile: str | None = None) -> Path | None:
    if config.output_dir is None:
        return None
    profile = profile or config.profile_id
    return Path(config.output_dir) / profile.replace("#", "") / agent.value / f"seed_{seed}"
