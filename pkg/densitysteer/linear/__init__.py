# coding=utf-8
"""
线性核心模块 - Brunovsky 对、状态转移矩阵与可控性 Gramian
"""

from densitysteer.linear.brunovsky import (
    BrunovskyPair,
    Gramian,
    HattingTransform,
    TransitionMatrix,
    bridge_covariance,
    gramian_closed_form,
    gramian_quadrature,
    gramian_solve,
    interp_matrices,
    reverse_gramian,
    spd_inv_sqrt,
    spd_sqrt,
    state_transition,
    transition_offset,
)

__all__ = [
    "BrunovskyPair",
    "Gramian",
    "HattingTransform",
    "TransitionMatrix",
    "bridge_covariance",
    "gramian_closed_form",
    "gramian_quadrature",
    "gramian_solve",
    "interp_matrices",
    "reverse_gramian",
    "spd_inv_sqrt",
    "spd_sqrt",
    "state_transition",
    "transition_offset",
]
