"""
基础组件：任务基类、异常、配置与输出
"""
