# coding=utf-8
"""
Brunovsky 标准型线性代数核心

提供 (A, b) 积分链的状态转移矩阵、可控性 Gramian（闭式与 Simpson 求积）、
SPD 平方根、插值矩阵 P(t)、Q(t) 与两端固定过程的协方差。所有结果在构造后只读，可在线程间共享。
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Tuple

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import cho_factor, cho_solve, cholesky, svd

from densitysteer.utils.errors import DomainError


logger = logging.getLogger(__name__)

MAX_DIMENSION = 8
CONDITION_WARN_DIMENSION = 5
TIME_TOLERANCE = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _check_dimension(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DomainError(f"维数 n 必须为正整数，收到 {n!r}")
    if n > MAX_DIMENSION:
        raise DomainError(f"维数 n={n} 超过上限 {MAX_DIMENSION}（阶乘增长破坏双精度）")


def _check_interval(t: float, s: float) -> None:
    if t < s - TIME_TOLERANCE:
        raise DomainError(f"时间区间无效: t={t} < s={s}")
    if s < -TIME_TOLERANCE or t > 1.0 + TIME_TOLERANCE:
        raise DomainError(f"时间需满足 0 ≤ s ≤ t ≤ 1，收到 s={s}, t={t}")


@dataclass(frozen=True)
class BrunovskyPair:
    """积分链 (A, b)：A 为上移位矩阵，b = e_n"""

    n: int
    A: np.ndarray
    b: np.ndarray

    @classmethod
    def of(cls, n: int) -> "BrunovskyPair":
        _check_dimension(n)
        return cls(n=n, A=_frozen(np.eye(n, k=1)), b=_frozen(np.eye(n)[:, -1]))

    def controllability_matrix(self) -> np.ndarray:
        """[b | Ab | … | A^{n-1} b]"""
        columns = [self.b]
        for _ in range(self.n - 1):
            columns.append(self.A @ columns[-1])
        return np.column_stack(columns)

    def kalman_rank(self) -> int:
        return int(np.linalg.matrix_rank(self.controllability_matrix()))


@dataclass(frozen=True)
class TransitionMatrix:
    """状态转移矩阵 Φ(t,s) = exp(A(t−s))"""

    value: np.ndarray
    interval: Tuple[float, float]  # (s, t)


@dataclass(frozen=True)
class Gramian:
    """可控性 Gramian M(t,s)"""

    value: np.ndarray
    interval: Tuple[float, float]  # (s, t)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return gramian_solve(self.value, rhs)


def transition_offset(n: int, offset: float) -> np.ndarray:
    """exp(A·offset)，offset 可为负（用于 Φ(t,1)、exp(−tA) 与逆矩阵）"""
    _check_dimension(n)
    value = np.eye(n)
    for k in range(1, n):
        value += np.eye(n, k=k) * (offset ** k / factorial(k))
    return value


def state_transition(n: int, t: float, s: float) -> TransitionMatrix:
    """
    Brunovsky 对的状态转移矩阵

    Args:
        n: 维数
        t: 终止时刻
        s: 起始时刻

    Returns:
        TransitionMatrix，(i,j) 元为 (t−s)^{j−i}/(j−i)!
    """
    _check_dimension(n)
    _check_interval(t, s)
    return TransitionMatrix(value=_frozen(transition_offset(n, t - s)), interval=(float(s), float(t)))


def _gramian_entries(n: int, length: float) -> np.ndarray:
    value = np.zeros((n, n))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            power = 2 * n - i - j + 1
            value[i - 1, j - 1] = length ** power / (factorial(n - i) * factorial(n - j) * power)
    return value


def gramian_closed_form(n: int, t: float, s: float) -> Gramian:
    """
    可控性 Gramian 闭式解

    (i,j) 元为 (t−s)^{2n−i−j+1} / ((n−i)!(n−j)!(2n−i−j+1))，i、j 从 1 计数。
    """
    _check_dimension(n)
    _check_interval(t, s)
    if n > CONDITION_WARN_DIMENSION:
        logger.warning(f"[Gramian] n={n} > {CONDITION_WARN_DIMENSION}，M 条件数极大，结果精度下降")
    return Gramian(value=_frozen(_gramian_entries(n, max(t - s, 0.0))), interval=(float(s), float(t)))


def gramian_quadrature(n: int, t: float, s: float, steps: int = 200) -> Gramian:
    """复合 Simpson 求积 ∫ₛᵗ Φ(t,τ) b bᵀ Φ(t,τ)ᵀ dτ，作为闭式解的独立校验"""
    _check_dimension(n)
    _check_interval(t, s)
    if steps < 2:
        raise DomainError(f"求积步数必须 ≥ 2，收到 {steps}")
    if steps % 2:
        steps += 1
    taus = np.linspace(s, t, steps + 1)
    # Φ(t,τ) b 即 exp(A(t−τ)) 的最后一列
    columns = np.array([transition_offset(n, t - tau)[:, -1] for tau in taus])
    integrand = np.einsum("ki,kj->kij", columns, columns)
    if t - s <= 0.0:
        value = np.zeros((n, n))
    else:
        value = simpson(integrand, x=taus, axis=0)
    return Gramian(value=_frozen(value), interval=(float(s), float(t)))


def reverse_gramian(n: int, t: float) -> np.ndarray:
    """
    G(t) = ∫₀ᵗ exp(−sA) b bᵀ exp(−sAᵀ) ds 的闭式解

    与 M(t,0) 结构相同，仅 (i,j) 元乘 (−1)^{i+j}；等于 exp(−tA) M(t,0) exp(−tAᵀ)。
    """
    _check_dimension(n)
    _check_interval(t, 0.0)
    signs = np.array([(-1.0) ** (n - i) for i in range(1, n + 1)])
    return np.outer(signs, signs) * _gramian_entries(n, t)


def _spd_spectrum(M: np.ndarray, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    M = V diag(s²) Vᵀ，s 为 Cholesky 因子 Lᵀ 的奇异值

    Gramian 的元素跨越多个数量级（n=8 时约 1e-9 到 1），直接对 M 做特征分解
    会把最小特征值淹没在 ε·λ_max 的绝对误差里；对 Lᵀ 做 SVD 只需表示 √λ。
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DomainError(f"需要方阵，收到形状 {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise DomainError("矩阵不对称，无法计算 SPD 平方根")
    try:
        lower = cholesky(0.5 * (M + M.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"矩阵非正定，Cholesky 分解失败: {exc}") from exc
    _, singular, vt = svd(lower.T)
    if singular[-1] <= tol * singular[0]:
        raise DomainError(f"矩阵数值奇异：奇异值比 {singular[-1] / singular[0]:.3e}")
    return singular, vt.T


def spd_sqrt(M: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """对称正定矩阵的主平方根；tol 为 √λ_min/√λ_max 的下限"""
    singular, vectors = _spd_spectrum(M, tol)
    root = (vectors * singular) @ vectors.T
    return 0.5 * (root + root.T)


def spd_inv_sqrt(M: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """M^{−1/2}"""
    singular, vectors = _spd_spectrum(M, tol)
    root = (vectors / singular) @ vectors.T
    return 0.5 * (root + root.T)


def gramian_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky 求解 M X = rhs，避免显式求逆"""
    try:
        factor = cho_factor(np.asarray(M, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"Gramian 非正定，Cholesky 分解失败: {exc}") from exc
    return cho_solve(factor, np.asarray(rhs, dtype=float))


def interp_matrices(n: int, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    插值矩阵

    P(t) = Φ(t,1) M(1,t) M₁₀⁻¹ Φ₁₀，Q(t) = M(t,0) Φ(1,t)ᵀ M₁₀⁻¹。

    Returns:
        (P, Q)
    """
    _check_dimension(n)
    _check_interval(t, 0.0)
    hat = HattingTransform.for_dimension(n)
    phi_t1 = transition_offset(n, t - 1.0)
    m_1t = _gramian_entries(n, 1.0 - t)
    m_t0 = _gramian_entries(n, t)
    P = phi_t1 @ m_1t @ gramian_solve(hat.M10, hat.Phi10)
    # M 对称，故 Q = (M₁₀⁻¹ Φ(1,t) M(t,0))ᵀ
    Q = gramian_solve(hat.M10, transition_offset(n, 1.0 - t) @ m_t0).T
    return P, Q


def bridge_covariance(n: int, t: float) -> np.ndarray:
    """
    两端固定的先验过程在 t 时刻的协方差（单位扩散）

    S(t) = M(t,0) − M(t,0)Φ(1,t)ᵀ M₁₀⁻¹ Φ(1,t) M(t,0)，扩散系数 2ε 时乘 2ε；
    均值为 P(t)z₀ + Q(t)z₁。S(0) = S(1) = 0。
    """
    _check_dimension(n)
    _check_interval(t, 0.0)
    hat = HattingTransform.for_dimension(n)
    m_t0 = _gramian_entries(n, t)
    reach = transition_offset(n, 1.0 - t) @ m_t0
    value = m_t0 - reach.T @ gramian_solve(hat.M10, reach)
    return 0.5 * (value + value.T)


@dataclass(frozen=True)
class HattingTransform:
    """帽化变换所需的常量：Φ₁₀、M₁₀、M₁₀^{±1/2}、det M₁₀"""

    n: int
    Phi10: np.ndarray
    M10: np.ndarray
    M10_sqrt: np.ndarray
    M10_inv_sqrt: np.ndarray
    det_M10: float

    @property
    def source_map(self) -> np.ndarray:
        """L₀ = M₁₀^{−1/2} Φ₁₀，把 σ₀ 的坐标映到 ẑ"""
        return self.M10_inv_sqrt @ self.Phi10

    @property
    def target_map(self) -> np.ndarray:
        """L₁ = M₁₀^{−1/2}，把 σ₁ 的坐标映到 ẑ"""
        return self.M10_inv_sqrt

    @staticmethod
    def for_dimension(n: int) -> "HattingTransform":
        return _hatting_transform(int(n))


@lru_cache(maxsize=None)
def _hatting_transform(n: int) -> HattingTransform:
    _check_dimension(n)
    M10 = _gramian_entries(n, 1.0)
    return HattingTransform(
        n=n,
        Phi10=_frozen(transition_offset(n, 1.0)),
        M10=_frozen(M10),
        M10_sqrt=_frozen(spd_sqrt(M10)),
        M10_inv_sqrt=_frozen(spd_inv_sqrt(M10)),
        det_M10=float(np.linalg.det(M10)),
    )
