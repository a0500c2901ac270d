# coding=utf-8
"""
densitysteer - 反馈可线性化系统的概率密度引导

使用方式:
  python -m densitysteer --builtin example1     # 模块执行
  densitysteer --config config/config.yaml      # 安装后执行
"""

__version__ = "1.0.0"

from densitysteer.context import RunContext  # noqa: E402

__all__ = ["RunContext", "__version__"]
