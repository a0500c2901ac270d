# coding=utf-8
"""
值函数模块 - Hamiltonian、特征线积分、线性先验闭式解、包络表示与 HJB 残差
"""

from densitysteer.hjb.closed_form import (
    PROVENANCES,
    CharacteristicGeometry,
    RiccatiSolution,
    ValueFunction,
    Z0Solution,
    characteristic_geometry,
    hjb_residual,
    optimal_control_from_psi,
    psi_characteristic,
    riccati_oracle,
    solve_z0,
    spectral_margin,
    value_lattice,
)
from densitysteer.hjb.envelopes import (
    convexity_margin,
    discrete_conjugate,
    dual_grid_for,
    lower_envelope,
    upper_envelope,
)
from densitysteer.hjb.hamiltonian import HamiltonianSpec, hamiltonian
from densitysteer.hjb.strips import CharacteristicStrip, characteristic_rhs, integrate_strip

__all__ = [
    "PROVENANCES",
    "CharacteristicGeometry",
    "RiccatiSolution",
    "ValueFunction",
    "Z0Solution",
    "characteristic_geometry",
    "hjb_residual",
    "optimal_control_from_psi",
    "psi_characteristic",
    "riccati_oracle",
    "solve_z0",
    "spectral_margin",
    "value_lattice",
    "convexity_margin",
    "discrete_conjugate",
    "dual_grid_for",
    "lower_envelope",
    "upper_envelope",
    "HamiltonianSpec",
    "hamiltonian",
    "CharacteristicStrip",
    "characteristic_rhs",
    "integrate_strip",
]
