# coding=utf-8
"""
状态相关 Hamiltonian

    H(z, ζ) = Σ_{i<n} z_{i+1} ζᵢ − (α_τ/β_τ) ζₙ + ζₙ²/(2β_τ²)

α_τ = α∘τ⁻¹、β_τ = β∘τ⁻¹ 为 z 坐标下的反馈项；线性先验对应 α_τ ≡ 0、β_τ ≡ 1。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from densitysteer.geometry.linearizing import FeedbackLinearizingTuple, tau_inverse
from densitysteer.utils.errors import DomainError, SingularityError
from densitysteer.utils.numerics import central_gradient


logger = logging.getLogger(__name__)

SINGULAR_BETA = 1e-8

ScalarFn = Callable[[np.ndarray], float]


def _zero(_: np.ndarray) -> float:
    return 0.0


def _one(_: np.ndarray) -> float:
    return 1.0


@dataclass
class HamiltonianSpec:
    """
    z 坐标下的 (α_τ, β_τ) 及其梯度

    Attributes:
        n: 维数
        alpha: α_τ(z)
        beta: β_τ(z)
        alpha_gradient: ∇α_τ（缺省为中心差分）
        beta_gradient: ∇β_τ（缺省为中心差分）
        name: 标识
    """

    n: int
    alpha: ScalarFn
    beta: ScalarFn
    alpha_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    beta_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"
    linear_prior: bool = False
    _warm_starts: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @classmethod
    def linear(cls, n: int) -> "HamiltonianSpec":
        zeros = lambda z: np.zeros(n)  # noqa: E731
        return cls(n=n, alpha=_zero, beta=_one, alpha_gradient=zeros, beta_gradient=zeros, name="linear", linear_prior=True)

    @classmethod
    def from_tuple(cls, tuple_: FeedbackLinearizingTuple, guess=None) -> "HamiltonianSpec":
        """
        由反馈线性化元组构造 α_τ = α∘τ⁻¹、β_τ = β∘τ⁻¹

        τ⁻¹ 以上一次的解作为 Newton 初值，沿特征线连续求值时收敛很快。
        """
        spec = cls(n=tuple_.dimension, alpha=_zero, beta=_one, name=tuple_.system.name)
        if guess is not None:
            spec._warm_starts["x"] = np.asarray(guess, dtype=float)

        def preimage(z: np.ndarray) -> np.ndarray:
            x = tau_inverse(tuple_, z, guess=spec._warm_starts.get("x"))
            spec._warm_starts["x"] = x
            return x

        spec.alpha = lambda z: float(tuple_.alpha(preimage(np.asarray(z, dtype=float))))
        spec.beta = lambda z: float(tuple_.beta(preimage(np.asarray(z, dtype=float))))
        return spec

    def grad_alpha(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.alpha_gradient is not None:
            return np.asarray(self.alpha_gradient(z), dtype=float)
        return central_gradient(self.alpha, z)

    def grad_beta(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.beta_gradient is not None:
            return np.asarray(self.beta_gradient(z), dtype=float)
        return central_gradient(self.beta, z)

    def feedback(self, z, tol: float = SINGULAR_BETA):
        """(α_τ(z), β_τ(z))，|β_τ| 过小时抛出 SingularityError"""
        z = np.asarray(z, dtype=float)
        a, b = float(self.alpha(z)), float(self.beta(z))
        if abs(b) < tol:
            raise SingularityError(f"z={z.tolist()} 处 |β_τ| = {abs(b):.3e} < {tol:g}（相对阶边界）")
        return a, b

    def drift(self, z) -> np.ndarray:
        """a(z) = Az − (α_τ/β_τ) b"""
        z = np.asarray(z, dtype=float)
        a, b = self.feedback(z)
        value = np.append(z[1:], 0.0)
        value[-1] -= a / b
        return value

    def lagrangian(self, z, w) -> float:
        """
        ℓ(z, w) = β_τ²(wₙ − aₙ(z))²/2，w − a(z) ∉ span(b) 时为 +∞
        """
        z = np.asarray(z, dtype=float)
        w = np.asarray(w, dtype=float)
        gap = w - self.drift(z)
        if np.max(np.abs(gap[:-1]), initial=0.0) > 1e-12:
            return float("inf")
        _, b = self.feedback(z)
        return float(0.5 * b ** 2 * gap[-1] ** 2)

    def hamiltonian(self, z, zeta) -> float:
        z = np.asarray(z, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        if z.shape != (self.n,) or zeta.shape != (self.n,):
            raise DomainError(f"H 的参数须为 {self.n} 维向量，收到 {z.shape}、{zeta.shape}")
        a, b = self.feedback(z)
        return float(np.dot(z[1:], zeta[:-1]) - (a / b) * zeta[-1] + zeta[-1] ** 2 / (2.0 * b ** 2))

    def hamiltonian_field(self, points: np.ndarray, costates: np.ndarray) -> np.ndarray:
        """在 (m, n) 点阵上逐点求 H；线性先验时向量化"""
        points = np.asarray(points, dtype=float).reshape(-1, self.n)
        costates = np.asarray(costates, dtype=float).reshape(-1, self.n)
        if self.linear_prior:
            return np.sum(points[:, 1:] * costates[:, :-1], axis=1) + 0.5 * costates[:, -1] ** 2
        return np.array([self.hamiltonian(z, zeta) for z, zeta in zip(points, costates)])

    def to_dict(self) -> Dict[str, object]:
        return {"name": self.name, "n": self.n, "linear_prior": self.linear_prior}


def hamiltonian(spec: HamiltonianSpec, z, zeta) -> float:
    """H(z, ζ)"""
    return spec.hamiltonian(z, zeta)
