"""
命令行退出码
"""
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_ACCEPTANCE = 3


class CommandError(Exception):
    """子命令失败，携带退出码与说明"""

    def __init__(self, status_code: int, detail: str):
        self.status_code = status_code
        self.detail = detail
        super().__init__(detail)


def from_service(result: dict, default: str) -> CommandError:
    """把服务层的失败字典转换为命令错误"""
    code = EXIT_NUMERIC if result.get("kind") == "numeric" else EXIT_USAGE
    return CommandError(code, result.get("error", default))
