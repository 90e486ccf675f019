"""
受监测自由费米子链模拟与验证工具包
"""

__version__ = "0.1.0"
