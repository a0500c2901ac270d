# coding=utf-8
"""
特征线积分

    dz/ds = Az + bbᵀζ/β² − (α/β)b
    dζ/ds = −Aᵀζ + (bᵀζ/β²)(β∇α − α∇β) + ((bᵀζ)²/β³)∇β
    dθ/ds = 0,  θ₀ = −H(z₀, ζ₀)
    dψ/ds = (bᵀζ)²/(2β²)

取 s = t，经典四阶 Runge–Kutta。
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from densitysteer.hjb.hamiltonian import SINGULAR_BETA, HamiltonianSpec
from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)


@dataclass
class CharacteristicStrip:
    """一条特征线上的 (z, ζ, θ, ψ)"""

    times: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray
    psi: np.ndarray

    def hamiltonian_path(self, spec: HamiltonianSpec) -> np.ndarray:
        return np.array([spec.hamiltonian(z, zeta) for z, zeta in zip(self.z, self.zeta)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": len(self.times) - 1,
            "t_final": float(self.times[-1]),
            "z_final": self.z[-1].tolist(),
            "zeta_final": self.zeta[-1].tolist(),
            "theta": float(self.theta[0]),
            "psi_final": float(self.psi[-1]),
        }


def characteristic_rhs(spec: HamiltonianSpec, z: np.ndarray, zeta: np.ndarray, tol: float = SINGULAR_BETA) -> Tuple[np.ndarray, np.ndarray, float]:
    """返回 (dz/ds, dζ/ds, dψ/ds)"""
    a, b = spec.feedback(z, tol)
    push = zeta[-1]  # bᵀζ

    dz = np.append(z[1:], 0.0)
    dz[-1] += push / b ** 2 - a / b

    dzeta = np.concatenate(([0.0], -zeta[:-1]))
    if not spec.linear_prior:
        grad_a = spec.grad_alpha(z)
        grad_b = spec.grad_beta(z)
        dzeta = dzeta + (push / b ** 2) * (b * grad_a - a * grad_b) + (push ** 2 / b ** 3) * grad_b

    dpsi = push ** 2 / (2.0 * b ** 2)
    return dz, dzeta, float(dpsi)


def integrate_strip(
    spec: HamiltonianSpec,
    z0,
    zeta0,
    psi0: float,
    steps: int = 100,
    t_final: float = 1.0,
    singular_tol: float = SINGULAR_BETA,
) -> CharacteristicStrip:
    """
    RK4 积分一条特征线

    Args:
        spec: Hamiltonian 描述
        z0, zeta0: 初始状态与协态
        psi0: 初始值函数值
        steps: 步数
        t_final: 终止时刻

    Returns:
        CharacteristicStrip

    Raises:
        SingularityError: 路径上 |β_τ| < singular_tol
    """
    if steps < 1:
        raise DomainError(f"积分步数必须 ≥ 1，收到 {steps}")
    n = spec.n
    z = np.asarray(z0, dtype=float).copy()
    zeta = np.asarray(zeta0, dtype=float).copy()
    if z.shape != (n,) or zeta.shape != (n,):
        raise DomainError(f"初值须为 {n} 维向量")

    h = t_final / steps
    times = np.linspace(0.0, t_final, steps + 1)
    zs = np.empty((steps + 1, n))
    zetas = np.empty((steps + 1, n))
    psis = np.empty(steps + 1)
    zs[0], zetas[0], psis[0] = z, zeta, psi0
    theta = -spec.hamiltonian(z, zeta)

    def rhs(state: np.ndarray) -> np.ndarray:
        dz, dzeta, dpsi = characteristic_rhs(spec, state[:n], state[n:2 * n], singular_tol)
        return np.concatenate((dz, dzeta, [dpsi]))

    state = np.concatenate((z, zeta, [psi0]))
    for k in range(steps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        zs[k + 1], zetas[k + 1], psis[k + 1] = state[:n], state[n:2 * n], state[-1]

    logger.debug(f"[特征线] {steps} 步 RK4 完成，ψ: {psi0:.6g} → {psis[-1]:.6g}")
    return CharacteristicStrip(times=times, z=zs, zeta=zetas, theta=np.full(steps + 1, theta), psi=psis)
