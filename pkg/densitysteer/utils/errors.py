# coding=utf-8
"""
自定义错误类

定义密度引导各阶段使用的异常类型。每个异常携带错误码、建议信息与
CLI 退出码（2 配置错误，3 收敛失败，4 数值定义域错误）。
"""

from typing import Any, Dict, List, Optional, Sequence


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_DOMAIN = 4


class SteeringError(Exception):
    """密度引导错误基类"""

    exit_code = EXIT_DOMAIN

    def __init__(
        self,
        message: str,
        code: str = "STEERING_ERROR",
        suggestion: Optional[str] = None,
        stage: Optional[str] = None,
    ):
        super().__init__(message)
        self.code = code
        self.message = message
        self.suggestion = suggestion
        self.stage = stage

    def to_dict(self) -> dict:
        """转换为字典格式"""
        error_dict: Dict[str, Any] = {
            "code": self.code,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        if self.stage:
            error_dict["stage"] = self.stage
        if self.suggestion:
            error_dict["suggestion"] = self.suggestion
        return error_dict


class ConfigurationError(SteeringError):
    """配置错误（附带字段路径）"""

    exit_code = EXIT_CONFIG

    def __init__(self, message: str, field: Optional[str] = None, suggestion: Optional[str] = None):
        full = f"{field}: {message}" if field else message
        super().__init__(
            message=full,
            code="CONFIGURATION_ERROR",
            suggestion=suggestion or "请检查场景配置文件中对应字段",
        )
        self.field = field


class DomainError(SteeringError):
    """数值定义域错误"""

    exit_code = EXIT_DOMAIN

    def __init__(self, message: str, code: str = "DOMAIN_ERROR", suggestion: Optional[str] = None):
        super().__init__(
            message=message,
            code=code,
            suggestion=suggestion or "请检查输入参数是否位于允许范围内",
        )


class RelativeDegreeError(DomainError):
    """相对阶检查失败"""

    def __init__(self, condition: str, point: Sequence[float], value: float):
        super().__init__(
            message=f"相对阶条件 {condition} 在点 {list(map(float, point))} 处不成立 (值={value:.3e})",
            code="RELATIVE_DEGREE",
            suggestion="请确认 λ 满足 L_g L_f^k λ = 0 (k<n-1) 且 L_g L_f^{n-1} λ ≠ 0",
        )
        self.condition = condition
        self.point = list(map(float, point))
        self.value = value


class InverseMapError(DomainError):
    """Newton 反解失败"""

    def __init__(self, message: str, trace: Optional[List[float]] = None):
        super().__init__(
            message=message,
            code="INVERSE_MAP",
            suggestion="请检查目标点是否位于映射像集内，或提供更好的初始猜测",
        )
        self.trace = list(trace or [])


class SupportCoverageError(DomainError):
    """网格未覆盖密度支撑"""

    def __init__(self, message: str):
        super().__init__(
            message=message,
            code="SUPPORT_COVERAGE",
            suggestion="请扩大网格范围或增加节点数",
        )


class GridMismatchError(DomainError):
    """两个网格不一致"""

    def __init__(self, message: str = "密度位于不同网格上"):
        super().__init__(message=message, code="GRID_MISMATCH")


class SingularityError(DomainError):
    """β_τ 接近零（相对阶边界）"""

    def __init__(self, message: str):
        super().__init__(
            message=message,
            code="SINGULARITY",
            suggestion="特征线接近 det(∇τ)=0 的边界，请缩短积分区间或更换初值",
        )


class SpectralConditionError(DomainError):
    """特征线映射的谱条件不满足"""

    def __init__(self, margin: float):
        super().__init__(
            message=f"特征线 Jacobian 谱裕度 {margin:.3e} ≤ 0，z₀ 方程解不唯一",
            code="SPECTRAL_CONDITION",
            suggestion="请确认端点边缘密度严格为正且 Brenier 势为凸",
        )
        self.margin = margin


class ConvergenceError(SteeringError):
    """迭代未收敛"""

    exit_code = EXIT_CONVERGENCE

    def __init__(self, message: str, history: Optional[List[Any]] = None, suggestion: Optional[str] = None):
        super().__init__(
            message=message,
            code="CONVERGENCE",
            suggestion=suggestion or "请增大 max_iter、放宽 tolerance 或增大 ε",
        )
        self.history = list(history or [])


class PipelineStageError(SteeringError):
    """流水线阶段错误（附带阶段箭头标签）"""

    def __init__(self, stage: str, cause: Exception):
        suggestion = getattr(cause, "suggestion", None)
        super().__init__(
            message=f"[{stage}] {cause}",
            code=getattr(cause, "code", "STAGE_FAILURE"),
            suggestion=suggestion,
            stage=stage,
        )
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", EXIT_DOMAIN)
