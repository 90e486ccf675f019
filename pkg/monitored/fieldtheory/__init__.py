"""
场论层：复制作用量的对称性分类与非线性σ模型
"""
