"""
selectcond：选择后条件推断的数值工具与蒙特卡罗实验
"""

__version__ = "1.0.0"
