# Repository 模块
