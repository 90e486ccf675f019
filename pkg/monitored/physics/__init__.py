"""
物理层：模型参数与高斯态
"""
