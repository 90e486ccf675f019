"""
场论层测试
"""
