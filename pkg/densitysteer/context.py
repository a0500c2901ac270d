# coding=utf-8
"""
运行上下文模块

封装场景到数值对象（系统、元组、网格、边缘密度、产物存储）的构造，
各对象按需懒构造并缓存，消除模式分派代码中的重复。
"""

import logging
from typing import Optional

from densitysteer.bridge.pipeline import SteeringProblem
from densitysteer.core.scenario import Scenario
from densitysteer.density.grid import Grid, GridDensity, covering_grid
from densitysteer.density.mixture import discretize
from densitysteer.geometry.linearizing import FeedbackLinearizingTuple
from densitysteer.geometry.systems import BuiltinSystem, get_builtin_system
from densitysteer.storage.local import LocalArtifactStore
from densitysteer.utils.errors import ConfigurationError, SupportCoverageError


logger = logging.getLogger(__name__)

LAMBDA_SELECTORS = ("default",)


class RunContext:
    """
    运行上下文类

    使用示例:
        scenario = Scenario.from_config(load_builtin("example1"))
        ctx = RunContext(scenario)
        problem = ctx.build_problem()
        with ctx.get_store() as store:
            ...
    """

    def __init__(self, scenario: Scenario):
        """
        初始化运行上下文

        Args:
            scenario: 已校验的场景
        """
        self.scenario = scenario
        self._builtin: Optional[BuiltinSystem] = None
        self._tuple: Optional[FeedbackLinearizingTuple] = None
        self._xgrid: Optional[Grid] = None
        self._zgrid: Optional[Grid] = None
        self._rho0: Optional[GridDensity] = None
        self._rho1: Optional[GridDensity] = None

    # === 系统 ===

    @property
    def builtin(self) -> BuiltinSystem:
        if self._builtin is None:
            if self.scenario.lam not in LAMBDA_SELECTORS:
                raise ConfigurationError(f"未知的 λ 选择器 {self.scenario.lam!r}", field="system.lambda")
            self._builtin = get_builtin_system(self.scenario.system)
            if self._builtin.system.n != self.scenario.dimension:
                raise ConfigurationError(
                    f"系统维数 {self._builtin.system.n} 与边缘分布维数 {self.scenario.dimension} 不一致",
                    field="marginals",
                )
        return self._builtin

    @property
    def linearizing_tuple(self) -> FeedbackLinearizingTuple:
        """反馈线性化元组（同时作为坐标映射 τ）"""
        if self._tuple is None:
            self._tuple = self.builtin.build()
        return self._tuple

    # === 网格与密度 ===

    @property
    def xgrid(self) -> Grid:
        if self._xgrid is None:
            spec = self.scenario.xgrid
            self._xgrid = Grid.from_bounds(spec.lower, spec.upper, spec.nodes)
        return self._xgrid

    @property
    def zgrid(self) -> Grid:
        """配置未给出边界时，取 τ(x 网格) 的包围盒"""
        if self._zgrid is None:
            spec = self.scenario.zgrid
            if spec is not None and spec.resolved:
                self._zgrid = Grid.from_bounds(spec.lower, spec.upper, spec.nodes)
            else:
                images, _, inside = self.linearizing_tuple.images(self.xgrid)
                if not inside.any():
                    raise SupportCoverageError("x 网格没有节点落在系统定义域内")
                nodes = spec.nodes if spec is not None else list(self.xgrid.shape)
                self._zgrid = covering_grid(images[inside], nodes, pad=0.0)
                logger.info(f"[运行上下文] z 网格取 τ(x 网格) 的包围盒: {self._zgrid.to_dict()}")
        return self._zgrid

    @property
    def rho0(self) -> GridDensity:
        if self._rho0 is None:
            self._rho0 = discretize(self.scenario.rho0, self.xgrid, mass_tolerance=self.scenario.mass_tolerance)
        return self._rho0

    @property
    def rho1(self) -> GridDensity:
        if self._rho1 is None:
            self._rho1 = discretize(self.scenario.rho1, self.xgrid, mass_tolerance=self.scenario.mass_tolerance)
        return self._rho1

    def hjb_grid(self) -> Grid:
        """值函数格点：z 网格的包围盒，按 hjb.nodes 重新划分"""
        return Grid.from_bounds(self.zgrid.lower, self.zgrid.upper, self.scenario.hjb_nodes)

    # === 流水线 ===

    def build_problem(self, eps: Optional[float] = None) -> SteeringProblem:
        scenario = self.scenario
        return SteeringProblem(
            tmap=self.linearizing_tuple,
            rho0=self.rho0,
            rho1=self.rho1,
            zgrid=self.zgrid,
            eps=scenario.eps if eps is None else eps,
            delta=scenario.delta,
            max_iter=scenario.max_iter,
            snapshots=scenario.snapshots,
            hat_nodes=scenario.hat_nodes,
            control_form=scenario.control_form,
            normalize_kernels=scenario.normalize_kernels,
            reference_point=self.builtin.reference_point,
            mass_tolerance=scenario.mass_tolerance,
            renormalize=scenario.renormalize,
            match_endpoints=scenario.match_endpoints,
            anneal_from=scenario.anneal_from,
            anneal_factor=scenario.anneal_factor,
            reconstruction=scenario.reconstruction,
            pair_prune=scenario.pair_prune,
        )

    # === 存储 ===

    def get_store(self, output_dir: Optional[str] = None) -> LocalArtifactStore:
        return LocalArtifactStore(output_dir or self.scenario.output_dir)
