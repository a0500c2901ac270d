# coding=utf-8
"""
完整的 ε 正则化引导流水线

    (ρ₀, ρ₁) → (σ₀, σ₁) → (σ̂₀, σ̂₁) → (ĥ₀ᴮ, h₁ᴮ) → (ĥ₀, h₁) → (ĥ, h) → σ_ε(z,t) → ρ_ε(x,t)

每个箭头是一个命名阶段，阶段内的失败统一包装为 PipelineStageError。
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np

from densitysteer.bridge.fixed_point import (
    BridgeFactors,
    RecoveredFactors,
    annealed_fixed_point,
    epsilon_schedule,
    recover_factors,
)
from densitysteer.bridge.kernels import KernelOperator
from densitysteer.bridge.mixture import DEFAULT_PRUNE, CouplingBridge, coupling_snapshot
from densitysteer.bridge.transient import (
    TransientSnapshot,
    assemble_snapshot,
    control_cost,
    fokker_planck_residual,
    propagate_factors,
)
from densitysteer.density.grid import Grid, GridDensity, l1_distance
from densitysteer.density.transform import hat_marginals, pullback_to_x, pushforward_diffeo
from densitysteer.geometry.maps import CoordinateMap
from densitysteer.utils.errors import ConfigurationError, PipelineStageError, SteeringError


logger = logging.getLogger(__name__)

STAGE_PUSHFORWARD = "rho->sigma (pushforward)"
STAGE_HATTING = "sigma->sigma_hat (hatting)"
STAGE_FIXED_POINT = "sigma_hat->factors_B (fixed point)"
STAGE_RECOVERY = "factors_B->factors (recovery)"
STAGE_PROPAGATION = "factors->transient"
STAGE_PRODUCT = "transient->sigma_eps"
STAGE_PULLBACK = "sigma_eps->rho_eps (pullback)"

DEFAULT_SNAPSHOTS = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
# coupling：内部时刻用端点耦合重构；factors：内部时刻也用核传播的因子乘积
RECONSTRUCTIONS = ("coupling", "factors")


@contextmanager
def pipeline_stage(label: str) -> Iterator[None]:
    """把阶段内的引导错误与线性代数错误标上箭头标签"""
    try:
        yield
    except PipelineStageError:
        raise
    except (SteeringError, np.linalg.LinAlgError) as e:
        raise PipelineStageError(label, e) from e


@dataclass
class SteeringProblem:
    """流水线输入：坐标映射、两端 x 密度、z 网格与求解参数"""

    tmap: CoordinateMap
    rho0: GridDensity
    rho1: GridDensity
    zgrid: Grid
    eps: float
    delta: float = 1e-9
    max_iter: int = 5000
    snapshots: Sequence[float] = DEFAULT_SNAPSHOTS
    hat_grid: Optional[Grid] = None
    hat_nodes: Union[int, Sequence[int], None] = None
    control_form: str = "log"
    normalize_kernels: bool = True
    support_floor: float = 1e-12
    init: float = 1.0
    reference_point: Optional[np.ndarray] = None
    mass_tolerance: float = 1e-3
    renormalize: bool = False
    anneal_from: Optional[float] = None
    anneal_factor: float = 2.0
    match_endpoints: bool = True
    reconstruction: str = "coupling"
    pair_prune: float = DEFAULT_PRUNE

    def __post_init__(self):
        if self.reconstruction not in RECONSTRUCTIONS:
            raise ConfigurationError(
                f"必须为 {' | '.join(RECONSTRUCTIONS)} 之一，收到 {self.reconstruction!r}", field="bridge.reconstruction"
            )
        if self.eps <= 0:
            raise ConfigurationError(f"必须为正，收到 {self.eps}", field="bridge.epsilon")
        if self.anneal_from is not None and self.anneal_factor <= 1.0:
            raise ConfigurationError(f"必须大于 1，收到 {self.anneal_factor}", field="bridge.anneal_factor")
        times = sorted(float(t) for t in self.snapshots)
        if not times or times[0] != 0.0 or times[-1] != 1.0 or any(t < 0 or t > 1 for t in times):
            raise ConfigurationError("快照时刻必须位于 [0,1] 且包含 0 与 1", field="output.snapshots")
        self.snapshots = tuple(times)
        if self.rho0.grid.dimension != self.zgrid.dimension:
            raise ConfigurationError("x 网格与 z 网格维数不一致", field="grid")

    @property
    def n(self) -> int:
        return self.zgrid.dimension

    @property
    def xgrid(self) -> Grid:
        return self.rho0.grid


@dataclass
class BridgeSolution:
    """流水线输出：各快照的 σ_ε、v_ε、ρ_ε 以及逐阶段诊断"""

    eps: float
    times: List[float]
    sigma: List[GridDensity]
    control: List[np.ndarray]
    rho: List[GridDensity]
    factors: BridgeFactors
    recovered: RecoveredFactors
    marginals: Dict[str, GridDensity]
    snapshots: List[TransientSnapshot] = field(default_factory=list)
    diagnostics: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    endpoint_residuals: Dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0

    def control_cost(self) -> float:
        return control_cost(self.snapshots)

    def fokker_planck_residual(self) -> Dict[str, float]:
        return fokker_planck_residual(self.snapshots, self.eps)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epsilon": self.eps,
            "snapshots": list(self.times),
            "iterations": self.factors.iterations,
            "endpoint_residuals": dict(self.endpoint_residuals),
            "diagnostics": self.diagnostics,
            "wall_time": self.wall_time,
        }


def _mass_summary(densities: Sequence[GridDensity]) -> Dict[str, float]:
    masses = [d.provenance.get("pre_normalization_mass", d.total_mass()) for d in densities]
    return {"min_pre_normalization_mass": float(min(masses)), "max_pre_normalization_mass": float(max(masses))}


def steer_pipeline(problem: SteeringProblem) -> BridgeSolution:
    """
    执行完整的 Schrödinger 桥引导流水线

    Args:
        problem: SteeringProblem

    Returns:
        BridgeSolution（含逐阶段诊断与端点 L¹ 残差）

    Raises:
        PipelineStageError: 任一阶段失败，带箭头标签与原始退出码
    """
    started = time.perf_counter()
    diagnostics: Dict[str, Dict[str, Any]] = {}
    n = problem.n

    with pipeline_stage(STAGE_PUSHFORWARD):
        sigma0 = pushforward_diffeo(problem.rho0, problem.tmap, problem.zgrid, guess=problem.reference_point)
        sigma1 = pushforward_diffeo(problem.rho1, problem.tmap, problem.zgrid, guess=problem.reference_point)
        diagnostics[STAGE_PUSHFORWARD] = {"sigma0": dict(sigma0.provenance), "sigma1": dict(sigma1.provenance)}

    with pipeline_stage(STAGE_HATTING):
        sigma_hat0, sigma_hat1 = hat_marginals(sigma0, sigma1, n, hat_grid=problem.hat_grid, nodes=problem.hat_nodes)
        diagnostics[STAGE_HATTING] = {
            "hat_grid": sigma_hat0.grid.to_dict(),
            "sigma_hat0": dict(sigma_hat0.provenance),
            "sigma_hat1": dict(sigma_hat1.provenance),
        }

    with pipeline_stage(STAGE_FIXED_POINT):
        hat_grid = sigma_hat0.grid
        schedule = epsilon_schedule(problem.eps, problem.anneal_from, problem.anneal_factor)
        factors = annealed_fixed_point(
            lambda level: KernelOperator.brownian(hat_grid, level),
            sigma_hat0, sigma_hat1, schedule,
            delta=problem.delta, max_iter=problem.max_iter,
            init=problem.init, support_floor=problem.support_floor,
        )
        diagnostics[STAGE_FIXED_POINT] = factors.to_dict()

    with pipeline_stage(STAGE_RECOVERY):
        recovered = recover_factors(
            factors, n, problem.zgrid,
            marginals=(sigma0, sigma1) if problem.match_endpoints else None,
            support_floor=problem.support_floor,
        )
        diagnostics[STAGE_RECOVERY] = {
            "clamped_nodes": recovered.clamped_nodes,
            "endpoint_correction": list(recovered.endpoint_correction),
        }

    coupled = problem.reconstruction == "coupling"
    with pipeline_stage(STAGE_PROPAGATION):
        # coupling 模式下只有端点走因子路径
        propagated = [
            (t, *propagate_factors(recovered, t, problem.eps, problem.normalize_kernels))
            for t in problem.snapshots
            if not coupled or t in (0.0, 1.0)
        ]
        bridge = CouplingBridge.from_factors(factors, n, problem.eps, prune=problem.pair_prune) if coupled else None
        diagnostics[STAGE_PROPAGATION] = {
            "times": list(problem.snapshots),
            "normalized_kernels": problem.normalize_kernels,
            "reconstruction": problem.reconstruction,
        }
        if bridge is not None:
            diagnostics[STAGE_PROPAGATION]["coupling"] = dict(bridge.diagnostics)

    with pipeline_stage(STAGE_PRODUCT):
        by_time = {
            t: assemble_snapshot(
                problem.zgrid, t, problem.eps, log_h_hat, log_h,
                control_form=problem.control_form, renormalize=problem.renormalize,
                mass_tolerance=problem.mass_tolerance,
            )
            for t, log_h_hat, log_h in propagated
        }
        for t in problem.snapshots:
            if t not in by_time:
                by_time[t] = coupling_snapshot(
                    bridge, problem.zgrid, t,
                    renormalize=problem.renormalize, mass_tolerance=problem.mass_tolerance,
                )
        snapshots = [by_time[t] for t in problem.snapshots]
        diagnostics[STAGE_PRODUCT] = _mass_summary([s.sigma for s in snapshots])
        diagnostics[STAGE_PRODUCT]["endpoint_consistency"] = {
            "sigma0": l1_distance(snapshots[0].sigma, sigma0),
            "sigma1": l1_distance(snapshots[-1].sigma, sigma1),
        }

    with pipeline_stage(STAGE_PULLBACK):
        rho = [pullback_to_x(s.sigma, problem.tmap, problem.xgrid) for s in snapshots]
        diagnostics[STAGE_PULLBACK] = _mass_summary(rho)

    endpoint_residuals = {
        "rho0": l1_distance(rho[0], problem.rho0),
        "rho1": l1_distance(rho[-1], problem.rho1),
    }
    wall_time = time.perf_counter() - started
    logger.info(
        f"[流水线] ε={problem.eps} 完成，端点 L¹ 残差 "
        f"({endpoint_residuals['rho0']:.3e}, {endpoint_residuals['rho1']:.3e})，耗时 {wall_time:.2f}s"
    )
    return BridgeSolution(
        eps=problem.eps,
        times=[s.t for s in snapshots],
        sigma=[s.sigma for s in snapshots],
        control=[s.control for s in snapshots],
        rho=rho,
        factors=factors,
        recovered=recovered,
        marginals={"sigma0": sigma0, "sigma1": sigma1, "sigma_hat0": sigma_hat0, "sigma_hat1": sigma_hat1},
        snapshots=snapshots,
        diagnostics=diagnostics,
        endpoint_residuals=endpoint_residuals,
        wall_time=wall_time,
    )
