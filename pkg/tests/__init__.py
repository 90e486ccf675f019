"""
Monitored Fermions 测试包
"""
