from .car import CarScenario, build_car, input_set, weighted_l1_ball, zoh_double_integrator
from .config import CaseConfig, overtaking_config, turning_config
from .pipelines import SynthesisFailed, overtook, run_case_study_1, run_case_study_2, trajectory_rows
from .samplers import moves_left, sample_overtaking, sample_turning

__all__ = [
    "CarScenario", "build_car", "input_set", "weighted_l1_ball", "zoh_double_integrator",
    "CaseConfig", "overtaking_config", "turning_config", "SynthesisFailed", "overtook",
    "run_case_study_1", "run_case_study_2", "trajectory_rows", "moves_left", "sample_overtaking",
    "sample_turning",
]
