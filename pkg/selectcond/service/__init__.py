# Service 模块
