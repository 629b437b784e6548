# Schema 模块
