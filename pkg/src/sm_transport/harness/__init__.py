"""Scenario configuration, execution and reporting."""

from .config import DEFAULT_CONFIG, ScenarioConfig
from .runner import ScenarioResult, StudyResult, run_scenario, summarize

__all__ = ["DEFAULT_CONFIG", "ScenarioConfig", "ScenarioResult", "StudyResult", "run_scenario",
           "summarize"]
