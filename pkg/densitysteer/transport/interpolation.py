# coding=utf-8
"""
确定性（ε = 0）可行引导

    T(z)   = M₁₀^{1/2} ∇φ(M₁₀^{−1/2}Φ₁₀ z)
    T_t(z) = P(t) z + Q(t) T(z)
    σ̃(·,t) = (T_t)♯σ₀
    ṽ(z,t) = bᵀΦ(1,t)ᵀM₁₀⁻¹[T(y) − Φ₁₀ y]，y = T_t⁻¹(z)

T 已吸收帽化，因此推前的是 z 空间的 σ₀，t=1 时 σ̃ ≈ σ₁。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from densitysteer.bridge.transient import fokker_planck_residual
from densitysteer.density.grid import Grid, GridDensity, deposit_points, finalize_density
from densitysteer.geometry.maps import newton_solve
from densitysteer.linear.brunovsky import HattingTransform, gramian_solve, interp_matrices, transition_offset
from densitysteer.transport.potentials import BrenierPotential
from densitysteer.utils.errors import DomainError, InverseMapError


logger = logging.getLogger(__name__)

NEGLIGIBLE_DENSITY = 1e-8


@dataclass
class TransportInterpolation:
    """T 与 T_t 的求值、Jacobian 与 Newton 反解"""

    potential: BrenierPotential
    n: int
    _matrices: Dict[float, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.potential.dimension != self.n:
            raise DomainError(f"Brenier 势维数 {self.potential.dimension} 与 n={self.n} 不一致")
        self.hat = HattingTransform.for_dimension(self.n)

    def matrices(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(P(t), Q(t))，按 t 缓存"""
        key = float(t)
        if key not in self._matrices:
            self._matrices[key] = interp_matrices(self.n, key)
        return self._matrices[key]

    def T(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        return self.potential.gradient(z @ self.hat.source_map.T) @ self.hat.M10_sqrt.T

    def T_jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        hessians = self.potential.hessian(z @ self.hat.source_map.T)
        return np.einsum("ab,mbc,cd->mad", self.hat.M10_sqrt, hessians, self.hat.source_map)

    def T_t(self, z, t: float) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        P, Q = self.matrices(t)
        return z @ P.T + self.T(z) @ Q.T

    def T_t_jacobian(self, z, t: float) -> np.ndarray:
        P, Q = self.matrices(t)
        return P[None, :, :] + np.einsum("ab,mbc->mac", Q, self.T_jacobian(z))

    def inverse(self, z, t: float, guess=None, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        """
        T_t⁻¹(z)（逐点 Newton）

        Raises:
            InverseMapError: 所有初值均失败，附带目标点
        """
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        guesses = None if guess is None else np.asarray(guess, dtype=float).reshape(-1, self.n)
        back = transition_offset(self.n, -t)
        result = np.empty_like(z)
        for i, target in enumerate(z):
            starts = [target, back @ target]
            if guesses is not None:
                starts.insert(0, guesses[i])
            for start in starts:
                try:
                    result[i], _ = newton_solve(
                        lambda y: self.T_t(y, t)[0],
                        lambda y: self.T_t_jacobian(y, t)[0],
                        target, start, tol=tol, max_iter=max_iter,
                    )
                    break
                except InverseMapError:
                    continue
            else:
                raise InverseMapError(f"T_t⁻¹ 在 z={target.tolist()}, t={t} 处失败")
        return result

    def velocity_coefficients(self, t: float) -> np.ndarray:
        """c(t) = M₁₀⁻¹Φ(1,t)b，使 ṽ = c(t)ᵀ[T(y) − Φ₁₀y]"""
        return gramian_solve(self.hat.M10, transition_offset(self.n, 1.0 - t)[:, -1])

    def velocity_from_preimage(self, y, t: float) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, self.n)
        displacement = self.T(y) - y @ self.hat.Phi10.T
        return displacement @ self.velocity_coefficients(t)


def interpolate(potential: BrenierPotential, n: int) -> TransportInterpolation:
    """由 Brenier 势构造 T、T_t"""
    return TransportInterpolation(potential=potential, n=n)


@dataclass
class FeasibleSnapshot:
    """单个时刻的 σ̃ 与 ṽ"""

    t: float
    sigma: GridDensity
    control: np.ndarray
    masked_nodes: int = 0


def feasible_solution(
    interp: TransportInterpolation,
    sigma0: GridDensity,
    t: float,
    grid: Optional[Grid] = None,
    renormalize: bool = True,
) -> FeasibleSnapshot:
    """
    σ̃(·,t) = (T_t)♯σ₀ 与 ṽ(·,t)

    Args:
        interp: TransportInterpolation
        sigma0: z 空间的初始边缘密度
        t: 时刻 ∈ [0,1]
        grid: 输出网格（缺省为 σ₀ 的网格）

    Raises:
        InverseMapError: 有质量的节点处 T_t⁻¹ 失败
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"时刻必须位于 [0,1]，收到 {t}")
    grid = grid or sigma0.grid
    source_points = sigma0.grid.points()
    support = sigma0.support_mask(1e-12).ravel()
    masses = sigma0.values.ravel()[support] * sigma0.grid.cell_volume
    images = interp.T_t(source_points[support], t)
    values, lost = deposit_points(images, masses, grid)
    sigma = finalize_density(values, grid, renormalize, stage="feasible", lost_mass=lost, t=float(t))

    nodes = grid.points()
    occupied = np.flatnonzero(sigma.values.ravel() > NEGLIGIBLE_DENSITY * sigma.values.max())
    # 初值：像点最近的源节点
    nearest = np.argmin(cdist(nodes[occupied], images), axis=1)
    preimages = interp.inverse(nodes[occupied], t, guess=source_points[support][nearest])
    control = np.zeros(grid.size)
    control[occupied] = interp.velocity_from_preimage(preimages, t)
    return FeasibleSnapshot(t=float(t), sigma=sigma, control=control.reshape(grid.shape), masked_nodes=grid.size - occupied.size)


def continuity_residual(
    interp: TransportInterpolation,
    sigma0: GridDensity,
    times: Sequence[float],
) -> Dict[str, float]:
    """∂σ̃/∂t + ∇·((Az + bṽ)σ̃) 的有限差分残差（等间距 times）"""
    snapshots = [feasible_solution(interp, sigma0, t) for t in times]
    return fokker_planck_residual(snapshots, 0.0)


def transport_cost(interp: TransportInterpolation, sigma0: GridDensity) -> float:
    """
    ∫∫ ½|ṽ|²σ̃ dz dt

    沿直线特征线 ṽ(T_t(z),t) = c(t)ᵀd(z)，且 ∫₀¹ Φ(1,t)bbᵀΦ(1,t)ᵀdt = M₁₀，
    故代价等于 ½ Σ σ₀ dᵀM₁₀⁻¹d Δ，d(z) = T(z) − Φ₁₀z。
    """
    support = sigma0.support_mask(1e-12).ravel()
    points = sigma0.grid.points()[support]
    weights = sigma0.values.ravel()[support] * sigma0.grid.cell_volume
    displacement = interp.T(points) - points @ interp.hat.Phi10.T
    solved = gramian_solve(interp.hat.M10, displacement.T).T
    return float(0.5 * np.sum(weights * np.sum(displacement * solved, axis=1)))


@dataclass
class ValueBoundary:
    """
    值函数的边界数据

    ψ̃₁(z) = ½zᵀM₁₀⁻¹z − φ*(M₁₀^{−1/2}z)
    ψ̃₀(z) = φ(M₁₀^{−1/2}Φ₁₀z) − ½zᵀΦ₁₀ᵀM₁₀⁻¹Φ₁₀z
    """

    potential: BrenierPotential
    n: int
    grid: Optional[Grid] = None
    psi0_values: Optional[np.ndarray] = None
    psi1_values: Optional[np.ndarray] = None

    def __post_init__(self):
        self.hat = HattingTransform.for_dimension(self.n)
        self._weight0 = self.hat.source_map.T @ self.hat.source_map
        self._weight1 = gramian_solve(self.hat.M10, np.eye(self.n))

    def psi0(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        quadratic = 0.5 * np.einsum("ma,ab,mb->m", z, self._weight0, z)
        return self.potential.potential(z @ self.hat.source_map.T) - quadratic

    def psi0_gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        return self.potential.gradient(z @ self.hat.source_map.T) @ self.hat.source_map - z @ self._weight0

    def psi1(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        quadratic = 0.5 * np.einsum("ma,ab,mb->m", z, self._weight1, z)
        return quadratic - self.potential.conjugate(z @ self.hat.target_map.T)

    def psi1_gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float).reshape(-1, self.n)
        conj = self.potential.conjugate_gradient(z @ self.hat.target_map.T)
        return z @ self._weight1 - conj @ self.hat.target_map

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "grid": self.grid.to_dict() if self.grid is not None else None}


def value_boundary(
    potential: BrenierPotential,
    n: int,
    grid: Grid,
    hat_grid: Optional[Grid] = None,
) -> ValueBoundary:
    """
    在 z 网格上求 ψ̃₀、ψ̃₁

    帽化后的求值点落在 hat_grid 之外时记为 nan。
    """
    boundary = ValueBoundary(potential=potential, n=n, grid=grid)
    points = grid.points()
    psi0 = boundary.psi0(points)
    psi1 = boundary.psi1(points)
    if hat_grid is not None:
        psi0[~hat_grid.contains(points @ boundary.hat.source_map.T)] = np.nan
        psi1[~hat_grid.contains(points @ boundary.hat.target_map.T)] = np.nan
    boundary.psi0_values = psi0.reshape(grid.shape)
    boundary.psi1_values = psi1.reshape(grid.shape)
    masked = int(np.sum(np.isnan(psi0)) + np.sum(np.isnan(psi1)))
    if masked:
        logger.info(f"[边界值函数] {masked} 个求值点超出 ẑ 网格，已屏蔽")
    return boundary
