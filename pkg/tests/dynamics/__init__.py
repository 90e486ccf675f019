"""
动力学层测试
"""
