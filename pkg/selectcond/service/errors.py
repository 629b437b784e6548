"""
数值推断异常
"""


class SelectiveInferenceError(ValueError):
    """选择性推断中的数值失败"""


class EmptyTruncationError(SelectiveInferenceError):
    """截断集合概率质量为零"""

    def __init__(self, message: str = "empty truncation"):
        super().__init__(message)


class UnsupportedSelectionError(SelectiveInferenceError):
    """参数下选择概率为零"""

    def __init__(self, message: str = "unsupported selection"):
        super().__init__(message)


class InconsistentDatumError(SelectiveInferenceError):
    """观测数据不满足选择事件"""

    def __init__(self, message: str = "datum inconsistent with selection event"):
        super().__init__(message)


class VanishingSelectionError(SelectiveInferenceError):
    """选择概率下溢"""

    def __init__(self, message: str = "selection probability vanishes"):
        super().__init__(message)


class DivergentMLEError(SelectiveInferenceError):
    """似然沿某方向单调，MLE 在无穷远处"""

    def __init__(self, direction, message: str = "divergent MLE"):
        self.direction = direction
        super().__init__(f"{message} (direction {direction})")


class UnboundedIntervalError(SelectiveInferenceError):
    """置信区间端点无法在搜索范围内括住"""

    def __init__(self, side: str, message: str = "unbounded CI endpoint"):
        self.side = side
        super().__init__(f"{message} ({side})")


class InfeasiblePointError(SelectiveInferenceError):
    """观测点不在多面体内"""

    def __init__(self, message: str = "observed point outside the selection event"):
        super().__init__(message)


class EmptyEventError(SelectiveInferenceError):
    """沿目标方向事件为空"""

    def __init__(self, message: str = "event empty along target"):
        super().__init__(message)
