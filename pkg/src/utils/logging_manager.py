import os
import json
import threading
from typing import Dict, List, Optional, Any

from .helpers import get_current_iso_timestamp

LOG_LEVELS = {"DEBUG": 0, "INFO": 1, "WARNING": 2, "ERROR": 3}
BUFFER_LIMIT = 1000


class LoggingManager:
    """日志管理类：活动、审计、错误三路 JSON 行日志，附带当前子命令上下文"""

    def __init__(self, logs_dir: Optional[str] = None):
        self.logs_dir: Optional[str] = None
        self.log_files: Dict[str, Optional[str]] = {"activity": None, "audit": None, "error": None}

        self.log_config = {
            "log_level": "INFO",
            "max_log_size": 10 * 1024 * 1024,  # 10MB 后轮转
            "log_rotation": True,
            "log_formatter": "json"  # json, text
        }

        # 日志目录为空时只保留内存缓冲区
        self.buffers: Dict[str, List[Dict[str, str]]] = {"activity": [], "audit": [], "error": []}
        self.log_counter = {"activity": 0, "audit": 0, "error": 0}
        self.context: Dict[str, str] = {}
        self.lock = threading.Lock()

        if logs_dir:
            self.set_logs_dir(logs_dir)

    def set_logs_dir(self, logs_dir: Optional[str]) -> None:
        """设置日志目录；传入 None 时关闭文件输出"""
        with self.lock:
            self.logs_dir = logs_dir or None
            if not logs_dir:
                self.log_files = dict.fromkeys(self.log_files)
                return
            os.makedirs(logs_dir, exist_ok=True)
            self.log_files = {stream: os.path.join(logs_dir, f"{stream}.log") for stream in self.log_files}

    def set_context(self, **fields: Any) -> None:
        """设置附加到后续每条日志的字段（例如 subcommand）；取值为 None 时移除该字段"""
        with self.lock:
            for key, value in fields.items():
                if value is None:
                    self.context.pop(key, None)
                else:
                    self.context[key] = str(value)

    def _should_log(self, message_level: str) -> bool:
        current_level = LOG_LEVELS.get(self.log_config["log_level"], 1)
        return LOG_LEVELS.get(message_level, 1) >= current_level

    def _emit(self, stream: str, level: str, message: str, **kwargs: Any) -> Dict[str, str]:
        entry = {"timestamp": get_current_iso_timestamp(), "log_type": stream, "level": level, "message": message}
        with self.lock:
            entry.update(self.context)
        entry.update({key: str(value) for key, value in kwargs.items()})

        with self.lock:
            buffer = self.buffers[stream]
            buffer.append(entry)
            if len(buffer) > BUFFER_LIMIT:
                del buffer[:-BUFFER_LIMIT]
            self.log_counter[stream] += 1
            log_file = self.log_files[stream]
        if log_file:
            self._write_log_to_file(log_file, entry)
        return entry

    def _write_log_to_file(self, log_file: str, log_entry: Dict[str, str]) -> None:
        try:
            with self.lock:
                if (self.log_config["log_rotation"] and os.path.exists(log_file)
                        and os.path.getsize(log_file) > self.log_config["max_log_size"]):
                    self._rotate_log(log_file)

                with open(log_file, "a", encoding="utf-8") as f:
                    if self.log_config["log_formatter"] == "json":
                        f.write(json.dumps(log_entry, ensure_ascii=False) + "\n")
                    else:
                        extra = " ".join(f"{k}={v}" for k, v in log_entry.items()
                                         if k not in ("timestamp", "level", "message", "log_type"))
                        line = f"[{log_entry['timestamp']}] [{log_entry['level']}] {log_entry['message']}"
                        f.write(f"{line} {extra}\n" if extra else f"{line}\n")
        except OSError as e:
            print(f"写入日志文件失败: {e}")

    def _rotate_log(self, log_file: str) -> None:
        """旧文件改名为 <name>.1（覆盖上一份备份）"""
        os.replace(log_file, f"{log_file}.1")

    def log_activity(self, message: str, level: str = "INFO", **kwargs: Any) -> None:
        if self._should_log(level):
            self._emit("activity", level, message, **kwargs)

    def log_warning(self, message: str, **kwargs: Any) -> None:
        """数据告警：活动日志中的 WARNING 级别"""
        self.log_activity(message, "WARNING", **kwargs)

    def log_audit(self, operation: str, success: bool, **kwargs: Any) -> None:
        """每个子命令一条：操作名、是否成功、耗时等"""
        self._emit("audit", "INFO" if success else "ERROR", f"{operation} {'成功' if success else '失败'}",
                   operation=operation, success=success, **kwargs)

    def log_error(self, message: str, exception: Optional[BaseException] = None, **kwargs: Any) -> None:
        if exception is not None:
            message = f"{message}: {exception}"
            kwargs["exception_type"] = type(exception).__name__
        self._emit("error", "ERROR", message, **kwargs)

    def get_logs(self, stream: str, limit: int = 100, level: Optional[str] = None) -> List[Dict[str, str]]:
        """读取内存缓冲区中最近的日志"""
        with self.lock:
            logs = list(self.buffers[stream])
        if level:
            logs = [log for log in logs if log["level"] == level]
        return logs[-limit:]

    def analyze_logs(self) -> Dict[str, Any]:
        """按级别、类型统计内存中的日志，并列出失败的子命令与告警数"""
        with self.lock:
            all_logs = [log for buffer in self.buffers.values() for log in buffer]

        by_level: Dict[str, int] = {}
        by_type: Dict[str, int] = {}
        for log in all_logs:
            by_level[log["level"]] = by_level.get(log["level"], 0) + 1
            by_type[log["log_type"]] = by_type.get(log["log_type"], 0) + 1
        failed = sorted({log["operation"] for log in all_logs
                         if log["log_type"] == "audit" and log.get("success") == "False"})
        return {
            "total_logs": len(all_logs),
            "logs_by_level": dict(sorted(by_level.items())),
            "logs_by_type": dict(sorted(by_type.items())),
            "warnings": by_level.get("WARNING", 0),
            "failed_operations": failed,
        }

    def clear_logs(self) -> None:
        """清空内存日志与计数器"""
        with self.lock:
            for stream in self.buffers:
                self.buffers[stream].clear()
                self.log_counter[stream] = 0

    def update_log_config(self, **kwargs: Any) -> None:
        with self.lock:
            self.log_config.update(kwargs)


_logging_manager: Optional[LoggingManager] = None
_manager_lock = threading.Lock()


def get_logging_manager() -> LoggingManager:
    """获取进程内共享的日志管理器"""
    global _logging_manager
    with _manager_lock:
        if _logging_manager is None:
            _logging_manager = LoggingManager()
        return _logging_manager


def configure_logging(logs_dir: Optional[str], log_level: str = "INFO", log_formatter: str = "json") -> LoggingManager:
    """配置共享日志管理器的目录与级别"""
    manager = get_logging_manager()
    manager.set_logs_dir(logs_dir)
    manager.update_log_config(log_level=log_level, log_formatter=log_formatter)
    return manager
