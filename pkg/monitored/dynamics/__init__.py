"""
动力学层：量子轨迹、Lindblad矩方程与小体系稠密预言机
"""
