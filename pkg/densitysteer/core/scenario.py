# coding=utf-8
"""
场景模型与内置场景

BUILTIN_SCENARIOS 是与配置文件同构的原始文档（小写键），经 loader.build_config
处理后得到大写键配置字典，再由 Scenario.from_config 构造并校验。
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from densitysteer.bridge.mixture import DEFAULT_PRUNE
from densitysteer.bridge.pipeline import RECONSTRUCTIONS
from densitysteer.bridge.transient import CONTROL_FORMS
from densitysteer.core.config import parse_diagonal_or_matrix, parse_snapshot_times, validate_grid_section
from densitysteer.density.mixture import GaussianMixture
from densitysteer.hjb.closed_form import PROVENANCES
from densitysteer.utils.errors import ConfigurationError, DomainError


MODES = ("bridge", "ot", "hjb", "verify")
HJB_POTENTIALS = ("entropic", "gaussian")
SUPPORTED_VERSION = 1
DEFAULT_BOX_WIDTH = 4.0


BUILTIN_SCENARIOS: Dict[str, Dict[str, Any]] = {
    # 二维 Van der Pol 型系统，τ 为恒等映射
    "example1": {
        "version": 1,
        "name": "example1",
        "mode": "bridge",
        "system": {"name": "vdp2d", "lambda": "default"},
        # 均值轨迹经过 z₂ ≈ −1.2，z 网格取 [−2,2]² 且节点与 x 网格对齐
        "grid": {
            "x": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0], "nodes": 51},
            "z": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0], "nodes": 101},
            "hat_nodes": 51,
        },
        "marginals": {
            "rho0": {
                "weights": [0.19, 0.81],
                "means": [[0.30, 0.35], [0.30, 0.30]],
                "covariances": [[0.05, 0.067], [0.03, 0.05]],
            },
            "rho1": {
                "weights": [0.50, 0.50],
                "means": [[-0.40, -0.30], [-0.60, -0.50]],
                "covariances": [[0.095, 0.02], [0.02, 0.05]],
            },
        },
        "bridge": {"epsilon": 1e-3, "tolerance": 1e-9, "max_iter": 5000, "anneal_from": 0.05},
        "output": {"dir": "output/example1", "snapshots": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]},
    },
    # 三维微分平坦系统，质量保持在 X_R = {x₂ > −1}
    "example2": {
        "version": 1,
        "name": "example2",
        "mode": "bridge",
        "system": {"name": "flat3d", "lambda": "default"},
        "grid": {"x": {"nodes": 10}, "z": {"nodes": 10}},
        "marginals": {
            "rho0": {
                "weights": [0.19, 0.81],
                "means": [[0.30, 0.35, 0.50], [0.30, 0.30, 0.50]],
                "covariances": [[0.05, 0.067, 0.04], [0.03, 0.05, 0.05]],
            },
            "rho1": {
                "weights": [0.39, 0.61],
                "means": [[0.50, 0.40, 0.30], [0.80, 0.60, 0.40]],
                "covariances": [[0.095, 0.02, 0.04], [0.02, 0.05, 0.04]],
            },
        },
        "bridge": {"epsilon": 0.01, "tolerance": 1e-9, "max_iter": 5000},
        "output": {"dir": "output/example2", "snapshots": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]},
    },
    # 双积分器上的高斯到高斯引导，用于值函数交叉校验
    "brunovsky2d": {
        "version": 1,
        "name": "brunovsky2d",
        "mode": "hjb",
        "system": {"name": "brunovsky2d", "lambda": "default"},
        "grid": {"x": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0], "nodes": 41}},
        "marginals": {
            "rho0": {"weights": [1.0], "means": [[-0.5, 0.0]], "covariances": [[0.05, 0.05]]},
            "rho1": {"weights": [1.0], "means": [[0.5, 0.0]], "covariances": [[0.08, 0.06]]},
        },
        "bridge": {"epsilon": 0.05, "tolerance": 1e-9, "max_iter": 5000},
        "transport": {"eta": 0.01},
        "hjb": {"nodes": 31, "times": 11, "kinds": ["characteristic", "upper_envelope", "riccati_oracle"], "potential": "gaussian"},
        "output": {"dir": "output/brunovsky2d", "snapshots": [0.0, 0.25, 0.5, 0.75, 1.0]},
    },
}


@dataclass
class GridSpec:
    """网格规格；lower/upper 为 None 时由场景推断"""

    nodes: List[int]
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None

    @property
    def resolved(self) -> bool:
        return self.lower is not None and self.upper is not None

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]], dimension: int, field_path: str, default_nodes: int = 51) -> Optional["GridSpec"]:
        if section is None:
            return None
        if "LOWER" not in section and "UPPER" not in section:
            nodes = section.get("NODES", default_nodes)
            counts = [int(nodes)] * dimension if np.isscalar(nodes) else [int(c) for c in nodes]
            if len(counts) != dimension or any(c < 3 for c in counts):
                raise ConfigurationError(f"节点数无效: {nodes}", field=f"{field_path}.nodes")
            return cls(nodes=counts)
        lower, upper, counts = validate_grid_section(section, dimension, field_path)
        return cls(nodes=counts, lower=lower, upper=upper)

    def to_dict(self) -> Dict[str, Any]:
        return {"lower": self.lower, "upper": self.upper, "nodes": self.nodes}


def _mixture_from_config(section: Optional[Dict[str, Any]], field_path: str) -> GaussianMixture:
    if not isinstance(section, dict):
        raise ConfigurationError("缺少混合分布参数", field=field_path)
    for key in ("WEIGHTS", "MEANS", "COVARIANCES"):
        if key not in section:
            raise ConfigurationError("缺少字段", field=f"{field_path}.{key.lower()}")
    means = np.atleast_2d(np.asarray(section["MEANS"], dtype=float))
    dimension = means.shape[1]
    weights = np.asarray(section["WEIGHTS"], dtype=float).ravel()
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ConfigurationError(f"权重必须为正且和为 1，收到 {weights.tolist()}", field=f"{field_path}.weights")
    covariances = [
        parse_diagonal_or_matrix(value, dimension, f"{field_path}.covariances[{index}]")
        for index, value in enumerate(section["COVARIANCES"])
    ]
    try:
        return GaussianMixture(weights=weights, means=means, covariances=covariances)
    except DomainError as e:
        raise ConfigurationError(e.message, field=field_path) from e


@dataclass
class Scenario:
    """
    一次运行的完整描述

    Attributes:
        name: 场景名
        mode: bridge / ot / hjb / verify
        system: 内置系统名
        lam: λ 选择器
        xgrid, zgrid: 网格规格（zgrid 缺省时覆盖 τ(x 网格)）
        rho0, rho1: 两端高斯混合
        eps, delta, max_iter: 不动点参数
        anneal_from, anneal_factor: ε 退火的起点与倍率（anneal_from 为 None 时不退火）
        renormalize: 是否归一化快照（缺省否，质量漂移直接报错）
        reconstruction: 内部时刻的重构方式（coupling 端点耦合 / factors 核传播因子）
        pair_prune: 耦合重构中丢弃的配对质量下限
        snapshots: 快照时刻
        output_dir: 输出目录
    """

    name: str
    mode: str
    system: str
    rho0: GaussianMixture
    rho1: GaussianMixture
    xgrid: GridSpec
    zgrid: Optional[GridSpec] = None
    hat_nodes: Optional[int] = None
    lam: str = "default"
    eps: float = 1e-3
    delta: float = 1e-9
    max_iter: int = 5000
    control_form: str = "log"
    normalize_kernels: bool = True
    mass_tolerance: float = 1e-3
    renormalize: bool = False
    match_endpoints: bool = True
    anneal_from: Optional[float] = None
    anneal_factor: float = 2.0
    reconstruction: str = "coupling"
    pair_prune: float = DEFAULT_PRUNE
    eta: float = 1e-2
    transport_tolerance: float = 1e-9
    transport_max_iter: int = 5000
    hjb_nodes: int = 31
    hjb_times: int = 11
    hjb_kinds: Tuple[str, ...] = ("characteristic", "upper_envelope")
    hjb_potential: str = "entropic"
    snapshots: List[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    output_dir: str = "output"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"未知模式 {self.mode!r}，可选: {', '.join(MODES)}", field="mode")
        if self.rho0.dimension != self.rho1.dimension:
            raise ConfigurationError("两端混合分布维数不一致", field="marginals")
        if self.mode == "bridge" and not self.eps > 0:
            raise ConfigurationError(f"必须为正，收到 {self.eps}", field="bridge.epsilon")
        if not self.delta > 0:
            raise ConfigurationError(f"必须为正，收到 {self.delta}", field="bridge.tolerance")
        if self.max_iter < 1:
            raise ConfigurationError(f"必须 ≥ 1，收到 {self.max_iter}", field="bridge.max_iter")
        if self.anneal_from is not None and not self.anneal_from > 0:
            raise ConfigurationError(f"必须为正，收到 {self.anneal_from}", field="bridge.anneal_from")
        if not self.anneal_factor > 1.0:
            raise ConfigurationError(f"必须大于 1，收到 {self.anneal_factor}", field="bridge.anneal_factor")
        if self.reconstruction not in RECONSTRUCTIONS:
            raise ConfigurationError(f"可选 {RECONSTRUCTIONS}，收到 {self.reconstruction!r}", field="bridge.reconstruction")
        if not 0.0 <= self.pair_prune < 1.0:
            raise ConfigurationError(f"必须位于 [0,1)，收到 {self.pair_prune}", field="bridge.pair_prune")
        if self.control_form not in CONTROL_FORMS:
            raise ConfigurationError(f"可选 {CONTROL_FORMS}，收到 {self.control_form!r}", field="bridge.control_form")
        if self.mode == "ot" and not self.eta > 0:
            raise ConfigurationError(f"必须为正，收到 {self.eta}", field="transport.eta")
        unknown = [kind for kind in self.hjb_kinds if kind not in PROVENANCES]
        if unknown:
            raise ConfigurationError(f"未知的值函数类型 {unknown}，可选 {PROVENANCES}", field="hjb.kinds")
        if self.hjb_potential not in HJB_POTENTIALS:
            raise ConfigurationError(f"可选 {HJB_POTENTIALS}，收到 {self.hjb_potential!r}", field="hjb.potential")
        if "riccati_oracle" in self.hjb_kinds and self.hjb_potential != "gaussian":
            raise ConfigurationError("riccati_oracle 仅适用于 gaussian 势函数", field="hjb.kinds")
        if self.hjb_times < 3:
            raise ConfigurationError("至少 3 个时刻", field="hjb.times")
        self.snapshots = parse_snapshot_times(self.snapshots)
        if not self.xgrid.resolved:
            lower, upper = self.default_box()
            self.xgrid = GridSpec(nodes=self.xgrid.nodes, lower=lower, upper=upper)

    @property
    def dimension(self) -> int:
        return self.rho0.dimension

    def default_box(self, width: float = DEFAULT_BOX_WIDTH) -> Tuple[List[float], List[float]]:
        """两端混合均值 ± width·σ 的公共包围盒"""
        lo0, hi0 = self.rho0.support_box(width)
        lo1, hi1 = self.rho1.support_box(width)
        return np.minimum(lo0, lo1).tolist(), np.maximum(hi0, hi1).tolist()

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "Scenario":
        """由 loader 产出的大写键配置字典构造"""
        if config.get("VERSION") != SUPPORTED_VERSION:
            raise ConfigurationError(f"仅支持 version {SUPPORTED_VERSION}，收到 {config.get('VERSION')!r}", field="version")
        marginals = config.get("MARGINALS", {})
        rho0 = _mixture_from_config(marginals.get("RHO0"), "marginals.rho0")
        rho1 = _mixture_from_config(marginals.get("RHO1"), "marginals.rho1")
        n = rho0.dimension
        grid = config.get("GRID", {})
        xgrid = GridSpec.from_config(grid.get("X") or {"NODES": 51}, n, "grid.x")
        zgrid = GridSpec.from_config(grid.get("Z"), n, "grid.z", default_nodes=xgrid.nodes[0])
        bridge = config.get("BRIDGE", {})
        transport = config.get("TRANSPORT", {})
        hjb = config.get("HJB", {})
        output = config.get("OUTPUT", {})
        system = config.get("SYSTEM", {})
        if not system.get("NAME"):
            raise ConfigurationError("缺少系统名", field="system.name")
        return cls(
            name=config.get("NAME", system["NAME"]),
            mode=config.get("MODE", "bridge"),
            system=system["NAME"],
            lam=system.get("LAMBDA", "default"),
            rho0=rho0,
            rho1=rho1,
            xgrid=xgrid,
            zgrid=zgrid,
            hat_nodes=grid.get("HAT_NODES"),
            eps=float(bridge.get("EPSILON", 1e-3)),
            delta=float(bridge.get("TOLERANCE", 1e-9)),
            max_iter=int(bridge.get("MAX_ITER", 5000)),
            control_form=bridge.get("CONTROL_FORM", "log"),
            normalize_kernels=bool(bridge.get("NORMALIZE_KERNELS", True)),
            mass_tolerance=float(bridge.get("MASS_TOLERANCE", 1e-3)),
            renormalize=bool(bridge.get("RENORMALIZE", False)),
            match_endpoints=bool(bridge.get("MATCH_ENDPOINTS", True)),
            anneal_from=None if bridge.get("ANNEAL_FROM") is None else float(bridge["ANNEAL_FROM"]),
            anneal_factor=float(bridge.get("ANNEAL_FACTOR", 2.0)),
            reconstruction=bridge.get("RECONSTRUCTION", "coupling"),
            pair_prune=float(bridge.get("PAIR_PRUNE", DEFAULT_PRUNE)),
            eta=float(transport.get("ETA", 1e-2)),
            transport_tolerance=float(transport.get("TOLERANCE", 1e-9)),
            transport_max_iter=int(transport.get("MAX_ITER", 5000)),
            hjb_nodes=int(hjb.get("NODES", 31)),
            hjb_times=int(hjb.get("TIMES", 11)),
            hjb_kinds=tuple(hjb.get("KINDS", ("characteristic", "upper_envelope"))),
            hjb_potential=hjb.get("POTENTIAL", "entropic"),
            snapshots=output.get("SNAPSHOTS", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
            output_dir=output.get("DIR", "output"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "mode": self.mode,
            "system": {"name": self.system, "lambda": self.lam},
            "grid": {
                "x": self.xgrid.to_dict(),
                "z": self.zgrid.to_dict() if self.zgrid is not None else None,
                "hat_nodes": self.hat_nodes,
            },
            "marginals": {"rho0": self.rho0.to_dict(), "rho1": self.rho1.to_dict()},
            "bridge": {
                "epsilon": self.eps,
                "tolerance": self.delta,
                "max_iter": self.max_iter,
                "control_form": self.control_form,
                "normalize_kernels": self.normalize_kernels,
                "mass_tolerance": self.mass_tolerance,
                "renormalize": self.renormalize,
                "match_endpoints": self.match_endpoints,
                "anneal_from": self.anneal_from,
                "anneal_factor": self.anneal_factor,
                "reconstruction": self.reconstruction,
                "pair_prune": self.pair_prune,
            },
            "transport": {"eta": self.eta, "tolerance": self.transport_tolerance, "max_iter": self.transport_max_iter},
            "hjb": {"nodes": self.hjb_nodes, "times": self.hjb_times, "kinds": list(self.hjb_kinds), "potential": self.hjb_potential},
            "output": {"dir": self.output_dir, "snapshots": list(self.snapshots)},
        }
