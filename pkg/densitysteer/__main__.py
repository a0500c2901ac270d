# coding=utf-8
"""
densitysteer 主程序

按场景模式分派：bridge（Schrödinger 桥流水线）、ot（熵正则线性传输）、
hjb（值函数格点）、verify（可线性化条件检查）。所有产物原子写出。
"""

import argparse
import logging
import os
import sys
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional, Sequence

import numpy as np

from densitysteer import __version__
from densitysteer.bridge.pipeline import STAGE_HATTING, STAGE_PUSHFORWARD, pipeline_stage, steer_pipeline
from densitysteer.context import RunContext
from densitysteer.core.config import parse_snapshot_times
from densitysteer.core.loader import load_builtin, load_config
from densitysteer.core.scenario import BUILTIN_SCENARIOS, MODES, Scenario
from densitysteer.density.grid import l1_distance, moments
from densitysteer.density.transform import hat_marginals, pullback_to_x, pushforward_diffeo
from densitysteer.geometry.lie import check_linearizable
from densitysteer.geometry.linearizing import tau_inverse
from densitysteer.hjb.closed_form import hjb_residual, riccati_oracle, value_lattice
from densitysteer.hjb.hamiltonian import HamiltonianSpec
from densitysteer.linear.brunovsky import HattingTransform
from densitysteer.storage.base import RunRecord
from densitysteer.storage.local import LocalArtifactStore
from densitysteer.transport.interpolation import (
    continuity_residual,
    feasible_solution,
    interpolate,
    transport_cost,
    value_boundary,
)
from densitysteer.transport.plan import barycentric_map, entropic_plan
from densitysteer.transport.potentials import BrenierPotential, QuadraticPotential, monge_ampere_residual
from densitysteer.utils.errors import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, ConfigurationError, SteeringError


logger = logging.getLogger(__name__)

EXIT_UNEXPECTED = 1

STAGE_PLAN = "sigma_hat->plan (entropic OT)"
STAGE_INTERPOLATION = "plan->interpolation"
STAGE_VALUE = "potential->value lattice"


def snapshot_name(prefix: str, t: float) -> str:
    """快照文件名（不含扩展名），如 sigma_t0.200"""
    return f"{prefix}_t{t:.3f}"


@contextmanager
def _timer(record: RunRecord) -> Iterator[None]:
    started = time.perf_counter()
    yield
    record.wall_time = time.perf_counter() - started


class SteeringRunner:
    """密度引导运行器"""

    def __init__(self, scenario: Scenario, output_dir: Optional[str] = None):
        self.scenario = scenario
        self.ctx = RunContext(scenario)
        self.output_dir = output_dir or scenario.output_dir
        self._plan = None

    def run(self) -> RunRecord:
        """执行场景并原子写出产物"""
        handlers = {
            "bridge": self._run_bridge,
            "ot": self._run_ot,
            "hjb": self._run_hjb,
            "verify": self._run_verify,
        }
        mode = self.scenario.mode
        print(f"▶ 场景 {self.scenario.name}（模式 {mode}，n={self.scenario.dimension}）")
        with self.ctx.get_store(self.output_dir) as store:
            record = RunRecord(mode=mode, scenario=self.scenario.to_dict())
            with _timer(record):
                handlers[mode](store, record)
            store.write_run(record)
        print(f"✅ 产物已写入 {self.output_dir}")
        return record

    # ========================================
    # bridge
    # ========================================

    def _run_bridge(self, store: LocalArtifactStore, record: RunRecord) -> None:
        solution = steer_pipeline(self.ctx.build_problem())
        for t, sigma, control, rho in zip(solution.times, solution.sigma, solution.control, solution.rho):
            store.write_density(snapshot_name("sigma", t), sigma, t=t)
            store.write_grid_values(snapshot_name("control", t), sigma.grid, control, kind="control", t=t)
            store.write_density(snapshot_name("rho", t), rho, t=t)
        store.write_convergence(solution.factors.residual_history)

        record.epsilon = solution.eps
        record.iterations = solution.factors.iterations
        record.endpoint_residuals = dict(solution.endpoint_residuals)
        record.diagnostics = dict(solution.diagnostics)
        record.diagnostics["control_cost"] = solution.control_cost()
        if len(solution.times) >= 3:
            record.diagnostics["fokker_planck_residual"] = solution.fokker_planck_residual()
        print(
            f"  不动点迭代 {solution.factors.iterations} 次，端点 L¹ 残差 "
            f"ρ₀ {solution.endpoint_residuals['rho0']:.3e} / ρ₁ {solution.endpoint_residuals['rho1']:.3e}"
        )

    # ========================================
    # ot
    # ========================================

    def _z_marginals(self):
        ctx = self.ctx
        guess = ctx.builtin.reference_point
        with pipeline_stage(STAGE_PUSHFORWARD):
            sigma0 = pushforward_diffeo(ctx.rho0, ctx.linearizing_tuple, ctx.zgrid, guess=guess)
            sigma1 = pushforward_diffeo(ctx.rho1, ctx.linearizing_tuple, ctx.zgrid, guess=guess)
        with pipeline_stage(STAGE_HATTING):
            sigma_hat0, sigma_hat1 = hat_marginals(sigma0, sigma1, self.scenario.dimension, nodes=self.scenario.hat_nodes)
        return sigma0, sigma1, sigma_hat0, sigma_hat1

    def _entropic_potential(self, sigma_hat0, sigma_hat1, record: RunRecord) -> BrenierPotential:
        scenario = self.scenario
        with pipeline_stage(STAGE_PLAN):
            plan = entropic_plan(
                sigma_hat0, sigma_hat1, scenario.eta,
                delta=scenario.transport_tolerance, max_iter=scenario.transport_max_iter,
            )
        record.iterations = plan.factors.iterations
        record.diagnostics["plan"] = plan.to_dict()
        record.diagnostics["convergence_file"] = "ot/convergence.csv" if scenario.mode == "ot" else "hjb/convergence.csv"
        self._plan = plan
        return barycentric_map(plan)

    def _run_ot(self, store: LocalArtifactStore, record: RunRecord) -> None:
        scenario = self.scenario
        n = scenario.dimension
        sigma0, sigma1, sigma_hat0, sigma_hat1 = self._z_marginals()
        potential = self._entropic_potential(sigma_hat0, sigma_hat1, record)
        store.write_convergence(self._plan.factors.residual_history, name="ot/convergence")

        with pipeline_stage(STAGE_INTERPOLATION):
            interp = interpolate(potential, n)
            snapshots = [feasible_solution(interp, sigma0, t) for t in scenario.snapshots]

        rho = []
        for snap in snapshots:
            store.write_density(snapshot_name("ot/sigma", snap.t), snap.sigma, t=snap.t)
            store.write_grid_values(
                snapshot_name("ot/control", snap.t), snap.sigma.grid, snap.control,
                kind="control", t=snap.t, provenance={"masked_nodes": snap.masked_nodes},
            )
            rho_t = pullback_to_x(snap.sigma, self.ctx.linearizing_tuple, self.ctx.xgrid)
            store.write_density(snapshot_name("ot/rho", snap.t), rho_t, t=snap.t)
            rho.append(rho_t)

        record.epsilon = scenario.eta
        record.endpoint_residuals = {
            "sigma1": l1_distance(snapshots[-1].sigma, sigma1),
            "rho0": l1_distance(rho[0], self.ctx.rho0),
            "rho1": l1_distance(rho[-1], self.ctx.rho1),
        }
        record.diagnostics["monge_ampere"] = monge_ampere_residual(potential, sigma_hat0, sigma_hat1).to_dict()
        record.diagnostics["transport_cost"] = transport_cost(interp, sigma0)
        if len(scenario.snapshots) >= 3 and np.allclose(np.diff(scenario.snapshots), np.diff(scenario.snapshots)[0]):
            record.diagnostics["continuity_residual"] = continuity_residual(interp, sigma0, scenario.snapshots)
        print(
            f"  熵正则耦合 η={scenario.eta}，σ̃(1) 与 σ₁ 的 L¹ 距离 {record.endpoint_residuals['sigma1']:.3e}，"
            f"传输代价 {record.diagnostics['transport_cost']:.4e}"
        )

    # ========================================
    # hjb
    # ========================================

    def _gaussian_potential(self, sigma_hat0, sigma_hat1) -> QuadraticPotential:
        mean0, cov0 = moments(sigma_hat0)
        mean1, cov1 = moments(sigma_hat1)
        return QuadraticPotential.gaussian(mean0, cov0, mean1, cov1)

    def _riccati_for(self, potential: BrenierPotential, times: np.ndarray):
        if not isinstance(potential, QuadraticPotential):
            raise ConfigurationError("riccati_oracle 需要二次势函数", field="hjb.kinds")
        n = self.scenario.dimension
        source = HattingTransform.for_dimension(n).source_map
        Pi0 = source.T @ (potential.matrix - np.eye(n)) @ source
        q0 = source.T @ potential.shift
        return riccati_oracle(Pi0, q0, 0.0, n, times)

    def _run_hjb(self, store: LocalArtifactStore, record: RunRecord) -> None:
        scenario = self.scenario
        n = scenario.dimension
        _, _, sigma_hat0, sigma_hat1 = self._z_marginals()
        if scenario.hjb_potential == "gaussian":
            potential = self._gaussian_potential(sigma_hat0, sigma_hat1)
        else:
            potential = self._entropic_potential(sigma_hat0, sigma_hat1, record)
            store.write_convergence(self._plan.factors.residual_history, name="hjb/convergence")

        grid = self.ctx.hjb_grid()
        times = np.linspace(0.0, 1.0, scenario.hjb_times)
        spec = HamiltonianSpec.linear(n)
        with pipeline_stage(STAGE_VALUE):
            boundary = value_boundary(potential, n, grid)
            store.write_grid_values("hjb/psi0", grid, boundary.psi0_values, kind="value", t=0.0)
            store.write_grid_values("hjb/psi1", grid, boundary.psi1_values, kind="value", t=1.0)
            riccati = self._riccati_for(potential, times) if "riccati_oracle" in scenario.hjb_kinds else None

            lattices = {}
            for kind in scenario.hjb_kinds:
                value_fn = value_lattice(kind, grid, times, boundary=boundary, riccati=riccati)
                lattices[kind] = value_fn
                residual = hjb_residual(spec, value_fn)
                record.diagnostics[f"hjb_residual.{kind}"] = residual
                for index, t in enumerate(times):
                    store.write_grid_values(
                        snapshot_name(f"hjb/psi_{kind}", t), grid, value_fn.values[index],
                        kind="value", t=float(t), provenance={"provenance": kind},
                    )
                print(f"  {kind}: HJB 残差 RMS {residual['rms']:.3e}")

        record.diagnostics["agreement"] = _lattice_agreement(lattices)
        record.diagnostics["potential"] = scenario.hjb_potential

    # ========================================
    # verify
    # ========================================

    def _run_verify(self, store: LocalArtifactStore, record: RunRecord) -> None:
        builtin = self.ctx.builtin
        report = check_linearizable(builtin.system, builtin.reference_point, builtin.sample_points)
        record.diagnostics["linearizability"] = report.to_dict()
        status = "通过" if report.passed else "未通过"
        print(f"  可线性化检查{status}：rank {report.rank}，对合残差 {report.involutivity_residual:.3e}")
        if report.passed:
            record.diagnostics["tuple"] = _tuple_diagnostics(self.ctx)
        store.write_json("verify", record.diagnostics)


def _lattice_agreement(lattices: Dict[str, Any]) -> Dict[str, float]:
    """各来源与第一个来源在共同有限节点上的最大偏差"""
    kinds = list(lattices)
    if len(kinds) < 2:
        return {}
    reference = lattices[kinds[0]].values
    agreement = {}
    for kind in kinds[1:]:
        values = lattices[kind].values
        finite = np.isfinite(reference) & np.isfinite(values)
        agreement[f"{kind}-{kinds[0]}"] = float(np.max(np.abs(values[finite] - reference[finite]))) if finite.any() else float("nan")
    return agreement


def _tuple_diagnostics(ctx: RunContext) -> Dict[str, Any]:
    tuple_ = ctx.linearizing_tuple
    points = [np.asarray(p, dtype=float) for p in ctx.builtin.sample_points]
    betas = np.array([tuple_.beta(p) for p in points])
    dets = np.array([np.linalg.det(tuple_.jacobian(p)) for p in points])
    errors = [
        float(np.max(np.abs(tau_inverse(tuple_, tuple_.forward(p), guess=ctx.builtin.reference_point) - p)))
        for p in points
    ]
    return {
        "samples": len(points),
        "beta_range": [float(betas.min()), float(betas.max())],
        "jacobian_det_range": [float(dets.min()), float(dets.max())],
        "max_round_trip_error": max(errors) if errors else 0.0,
    }


# ========================================
# 命令行
# ========================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densitysteer",
        description="densitysteer - 反馈可线性化系统的概率密度引导",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
模式说明:
  bridge   Schrödinger 桥流水线（ε > 0）
  ot       熵正则线性最优传输（ε → 0 极限）
  hjb      值函数格点与 HJB 残差
  verify   可线性化条件与元组诊断

退出码: 0 成功，2 配置错误，3 不收敛，4 数值定义域错误
        """,
    )
    parser.add_argument("--config", help="场景文件路径（YAML 或 JSON），默认 config/config.yaml")
    parser.add_argument("--builtin", choices=sorted(BUILTIN_SCENARIOS), help="使用内置场景")
    parser.add_argument("--mode", choices=MODES, help="覆盖场景中的运行模式")
    parser.add_argument("--output-dir", help="输出目录")
    parser.add_argument("--snapshots", help='快照时刻，逗号分隔，如 "0,0.5,1"')
    parser.add_argument("--epsilon", type=float, help="扩散系数 ε")
    parser.add_argument("--max-iter", type=int, help="不动点最大迭代次数")
    parser.add_argument("--tolerance", type=float, help="不动点收敛容差 δ")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="日志级别，默认 WARNING（环境变量 DEBUG=true 时为 DEBUG）",
    )
    parser.add_argument("--list-builtins", action="store_true", help="列出内置场景后退出")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def apply_overrides(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """命令行参数覆盖大写键配置字典"""
    if args.mode:
        config["MODE"] = args.mode
    if args.output_dir:
        config["OUTPUT"]["DIR"] = args.output_dir
    if args.snapshots:
        config["OUTPUT"]["SNAPSHOTS"] = parse_snapshot_times(args.snapshots, field="--snapshots")
    if args.epsilon is not None:
        config["BRIDGE"]["EPSILON"] = args.epsilon
    if args.max_iter is not None:
        config["BRIDGE"]["MAX_ITER"] = args.max_iter
    if args.tolerance is not None:
        config["BRIDGE"]["TOLERANCE"] = args.tolerance
    return config


def _configure_logging(level: Optional[str]) -> None:
    if level is None:
        debug = os.environ.get("DEBUG", "").strip().lower() in ("true", "1", "yes")
        level = "DEBUG" if debug else "WARNING"
    logging.basicConfig(level=getattr(logging, level), format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")


def run(scenario: Scenario, output_dir: Optional[str] = None) -> RunRecord:
    """执行场景（库入口，异常原样抛出）"""
    return SteeringRunner(scenario, output_dir).run()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """主程序入口，返回退出码"""
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)

    if args.list_builtins:
        for name, document in sorted(BUILTIN_SCENARIOS.items()):
            print(f"  {name:<12} 系统 {document['system']['name']:<12} 模式 {document['mode']}")
        return EXIT_OK

    try:
        config = load_builtin(args.builtin) if args.builtin else load_config(args.config)
        scenario = Scenario.from_config(apply_overrides(config, args))
        record = run(scenario)
    except FileNotFoundError as e:
        print(f"❌ 配置文件错误: {e}")
        print("\n请使用 --config 指定场景文件，或使用 --builtin 选择内置场景")
        return EXIT_CONFIG
    except SteeringError as e:
        print(f"❌ {e.message}")
        if e.suggestion:
            print(f"   建议: {e.suggestion}")
        logger.debug("运行失败", exc_info=True)
        return e.exit_code
    except Exception as e:
        print(f"❌ 程序运行错误: {e}")
        if args.log_level == "DEBUG":
            raise
        return EXIT_UNEXPECTED

    linearizability = record.diagnostics.get("linearizability")
    if linearizability is not None and not linearizability.get("passed", False):
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
