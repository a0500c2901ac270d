# coding=utf-8
"""
线性最优传输模块 - 熵正则耦合、Brenier 势、位移插值与可行解
"""

from densitysteer.transport.interpolation import (
    FeasibleSnapshot,
    TransportInterpolation,
    ValueBoundary,
    continuity_residual,
    feasible_solution,
    interpolate,
    transport_cost,
    value_boundary,
)
from densitysteer.transport.plan import TransportPlan, barycentric_map, entropic_plan
from densitysteer.transport.potentials import (
    BrenierPotential,
    MongeAmpereReport,
    MongeMap,
    QuadraticPotential,
    monge_ampere_residual,
)

__all__ = [
    "FeasibleSnapshot",
    "TransportInterpolation",
    "ValueBoundary",
    "continuity_residual",
    "feasible_solution",
    "interpolate",
    "transport_cost",
    "value_boundary",
    "TransportPlan",
    "barycentric_map",
    "entropic_plan",
    "BrenierPotential",
    "MongeAmpereReport",
    "MongeMap",
    "QuadraticPotential",
    "monge_ampere_residual",
]
