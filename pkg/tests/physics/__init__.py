"""
物理层测试
"""
