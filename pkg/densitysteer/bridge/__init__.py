# coding=utf-8
"""
Schrödinger 桥模块 - 转移核、不动点迭代、因子恢复、瞬态重构与完整流水线
"""

from densitysteer.bridge.fixed_point import (
    BridgeFactors,
    RecoveredFactors,
    annealed_fixed_point,
    epsilon_schedule,
    fixed_point,
    recover_factors,
)
from densitysteer.bridge.kernels import (
    KernelOperator,
    brownian_kernel,
    chapman_kolmogorov_error,
    prior_kernel,
)
from densitysteer.bridge.mixture import CouplingBridge, coupling_snapshot
from densitysteer.bridge.pipeline import BridgeSolution, SteeringProblem, pipeline_stage, steer_pipeline
from densitysteer.bridge.transient import (
    TransientSnapshot,
    control_cost,
    fokker_planck_residual,
    transient,
)

__all__ = [
    "BridgeFactors",
    "RecoveredFactors",
    "annealed_fixed_point",
    "epsilon_schedule",
    "fixed_point",
    "recover_factors",
    "KernelOperator",
    "brownian_kernel",
    "chapman_kolmogorov_error",
    "prior_kernel",
    "CouplingBridge",
    "coupling_snapshot",
    "BridgeSolution",
    "SteeringProblem",
    "pipeline_stage",
    "steer_pipeline",
    "TransientSnapshot",
    "control_cost",
    "fokker_planck_residual",
    "transient",
]
