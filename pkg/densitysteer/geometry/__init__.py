# coding=utf-8
"""
几何模块 - 向量场微积分、可线性化检查与反馈线性化元组
"""

from densitysteer.geometry.fields import ControlAffineSystem, ScalarField, VectorField
from densitysteer.geometry.lie import (
    LinearizabilityReport,
    ad_power,
    check_linearizable,
    lie_bracket,
    lie_derivative,
)
from densitysteer.geometry.linearizing import (
    FeedbackLinearizingTuple,
    build_tuple,
    recover_control,
    tau_inverse,
)
from densitysteer.geometry.maps import CoordinateMap, IdentityMap, LinearMap
from densitysteer.geometry.systems import BUILTIN_SYSTEMS, BuiltinSystem, get_builtin_system

__all__ = [
    "ControlAffineSystem",
    "ScalarField",
    "VectorField",
    "LinearizabilityReport",
    "ad_power",
    "check_linearizable",
    "lie_bracket",
    "lie_derivative",
    "FeedbackLinearizingTuple",
    "build_tuple",
    "recover_control",
    "tau_inverse",
    "CoordinateMap",
    "IdentityMap",
    "LinearMap",
    "BUILTIN_SYSTEMS",
    "BuiltinSystem",
    "get_builtin_system",
]
