# coding=utf-8
"""
工具模块 - 错误类型与有限差分
"""

from densitysteer.utils.errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    PipelineStageError,
    SteeringError,
)
from densitysteer.utils.numerics import central_gradient, central_jacobian, nested_step

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "PipelineStageError",
    "SteeringError",
    "central_gradient",
    "central_jacobian",
    "nested_step",
]
