"""Configuration, experiment runners and the ``stein-lab`` command line."""

from .config import ExperimentConfig, load_config
from .experiments import RUNNERS, RunRecord

__all__ = ["ExperimentConfig", "load_config", "RUNNERS", "RunRecord"]
