"""
任务层与命令行测试
"""
