# coding=utf-8
"""
坐标映射抽象

CoordinateMap 统一了 τ、恒等映射与线性映射的接口，供密度推前 / 拉回使用；
Newton 反解（带折半回溯）也在此实现。
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from densitysteer.utils.errors import InverseMapError


logger = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e14


def newton_solve(
    fn: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    target,
    guess,
    tol: float = 1e-10,
    max_iter: int = 50,
    max_halvings: int = 30,
    domain: Optional[Callable[[np.ndarray], bool]] = None,
) -> Tuple[np.ndarray, List[float]]:
    """
    Newton 迭代求解 fn(x) = target

    每步按折半回溯保证残差下降，且迭代点留在 domain 内。

    Returns:
        (解, 每步残差 ∞-范数轨迹)
    """
    target = np.asarray(target, dtype=float)
    x = np.array(guess, dtype=float)
    residual = np.asarray(fn(x), dtype=float) - target
    norm = float(np.max(np.abs(residual)))
    trace = [norm]
    for _ in range(max_iter):
        if norm <= tol:
            return x, trace
        J = np.asarray(jacobian(x), dtype=float)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > SINGULAR_CONDITION:
            raise InverseMapError(f"Jacobian 奇异 (x={x.tolist()})", trace=trace)
        step = np.linalg.solve(J, residual)
        damping = 1.0
        for _ in range(max_halvings + 1):
            candidate = x - damping * step
            if domain is None or domain(candidate):
                cand_residual = np.asarray(fn(candidate), dtype=float) - target
                cand_norm = float(np.max(np.abs(cand_residual)))
                if cand_norm < norm:
                    break
            damping *= 0.5
        else:
            if norm <= 10.0 * tol:
                return x, trace
            raise InverseMapError(f"Newton 回溯失败，残差停滞于 {norm:.3e} (x={x.tolist()})", trace=trace)
        x, residual, norm = candidate, cand_residual, cand_norm
        trace.append(norm)
    if norm <= tol:
        return x, trace
    raise InverseMapError(f"Newton 在 {max_iter} 步内未收敛，残差 {norm:.3e}", trace=trace)


class CoordinateMap(ABC):
    """坐标映射 x ↦ z"""

    dimension: int

    @abstractmethod
    def forward(self, x) -> np.ndarray:
        """映射 x ↦ z"""

    @abstractmethod
    def jacobian(self, x) -> np.ndarray:
        """∇ₓ 映射"""

    def contains(self, x) -> bool:
        return True

    def inverse(self, z, guess=None, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        start = np.asarray(z, dtype=float) if guess is None else guess
        x, _ = newton_solve(self.forward, self.jacobian, z, start, tol=tol, max_iter=max_iter, domain=self.contains)
        return x

    def jacobian_det(self, x) -> float:
        return abs(float(np.linalg.det(self.jacobian(x))))

    # ---------- 网格级缓存 ----------

    def _grid_cache(self) -> Dict:
        cache = getattr(self, "_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_cache", cache)
        return cache

    def images(self, grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        x 网格节点的像与 |det ∇τ|

        Returns:
            (像点 (N,n), |det| (N,), 定义域掩码 (N,))
        """
        key = ("images", grid.key)
        cache = self._grid_cache()
        if key not in cache:
            points = grid.points()
            inside = np.array([self.contains(p) for p in points], dtype=bool)
            images = np.full_like(points, np.nan)
            dets = np.zeros(len(points))
            for i in np.flatnonzero(inside):
                images[i] = self.forward(points[i])
                dets[i] = self.jacobian_det(points[i])
            cache[key] = (images, dets, inside)
        return cache[key]

    def preimages(self, grid, guess=None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        z 网格节点的原像（沿行主序热启动 Newton）

        Returns:
            (原像 (N,n)，失败节点为最后迭代点；成功掩码 (N,)；|det| (N,))
        """
        key = ("preimages", grid.key)
        cache = self._grid_cache()
        if key not in cache:
            points = grid.points()
            preimages = np.empty_like(points)
            success = np.zeros(len(points), dtype=bool)
            dets = np.zeros(len(points))
            fallback = None if guess is None else np.asarray(guess, dtype=float)
            previous = None
            for i, z in enumerate(points):
                starts = [s for s in (previous, fallback, z) if s is not None]
                last = starts[-1]
                for start in starts:
                    try:
                        x, _ = newton_solve(self.forward, self.jacobian, z, start, domain=self.contains)
                    except InverseMapError:
                        continue
                    preimages[i] = x
                    success[i] = True
                    dets[i] = self.jacobian_det(x)
                    previous = x
                    break
                else:
                    preimages[i] = last
            failed = int(np.sum(~success))
            if failed:
                logger.info(f"[坐标映射] {failed}/{len(points)} 个 z 节点没有原像")
            cache[key] = (preimages, success, dets)
        return cache[key]


class IdentityMap(CoordinateMap):
    """恒等映射"""

    def __init__(self, dimension: int):
        self.dimension = dimension

    def forward(self, x) -> np.ndarray:
        return np.array(x, dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return np.eye(self.dimension)

    def inverse(self, z, guess=None, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        return np.array(z, dtype=float)


class LinearMap(CoordinateMap):
    """线性映射 x ↦ L x"""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        self.dimension = self.matrix.shape[0]

    def forward(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def jacobian(self, x) -> np.ndarray:
        return self.matrix

    def inverse(self, z, guess=None, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
        return np.linalg.solve(self.matrix, np.asarray(z, dtype=float))
