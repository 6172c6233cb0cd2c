"""Configuration, orchestration and persistence of simulation runs."""
from .config import ExperimentConfig, load_config, save_config
from .runner import CSV_COLUMNS, figures, reach, run, sweep

__all__ = ["CSV_COLUMNS", "ExperimentConfig", "figures", "load_config", "reach", "run", "save_config", "sweep"]
