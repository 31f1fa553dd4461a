#!/usr/bin/env python3
"""
测试日志管理器：级别过滤、上下文字段、文件输出、轮转与汇总
"""

import json
import os
import shutil
import tempfile
import unittest

from src.utils.logging_manager import LoggingManager


class TestLoggingManager(unittest.TestCase):
    """测试日志管理器"""

    def setUp(self):
        """设置测试环境"""
        self.temp_dir = tempfile.mkdtemp()
        self.logs_dir = os.path.join(self.temp_dir, "logs")
        self.manager = LoggingManager(self.logs_dir)

    def tearDown(self):
        """清理测试环境"""
        shutil.rmtree(self.temp_dir)

    def read_lines(self, stream):
        with open(os.path.join(self.logs_dir, f"{stream}.log"), encoding="utf-8") as f:
            return [json.loads(line) for line in f]

    def test_json_lines(self):
        """测试三路日志各自写入 JSON 行"""
        self.manager.log_activity("语料已导入", users=10)
        self.manager.log_audit("cohort", True, elapsed=0.5)
        self.manager.log_error("训练失败", exception=ValueError("bad"))
        activity = self.read_lines("activity")
        self.assertEqual(activity[0]["message"], "语料已导入")
        self.assertEqual(activity[0]["users"], "10", "附加字段应转为字符串")
        audit = self.read_lines("audit")
        self.assertEqual((audit[0]["operation"], audit[0]["success"]), ("cohort", "True"))
        error = self.read_lines("error")
        self.assertEqual(error[0]["exception_type"], "ValueError")
        self.assertIn("bad", error[0]["message"])

    def test_level_filter(self):
        """测试低于配置级别的活动日志被丢弃"""
        self.manager.update_log_config(log_level="WARNING")
        self.manager.log_activity("调试信息", level="DEBUG")
        self.manager.log_activity("普通信息")
        self.manager.log_warning("州用户数不足", state="FL")
        logs = self.manager.get_logs("activity")
        self.assertEqual([log["level"] for log in logs], ["WARNING"])
        self.assertEqual(self.manager.get_logs("activity", level="INFO"), [])

    def test_context(self):
        """测试上下文字段附加到每条日志，设为 None 时移除"""
        self.manager.set_context(subcommand="trend")
        self.manager.log_activity("开始")
        self.manager.set_context(subcommand=None)
        self.manager.log_activity("结束")
        first, second = self.manager.get_logs("activity")
        self.assertEqual(first["subcommand"], "trend")
        self.assertNotIn("subcommand", second)

    def test_memory_only(self):
        """测试未设置日志目录时只保留内存缓冲区"""
        manager = LoggingManager()
        manager.log_activity("无文件")
        self.assertEqual(len(manager.get_logs("activity")), 1)
        self.assertEqual(manager.log_counter["activity"], 1)

    def test_text_formatter(self):
        """测试文本格式输出"""
        self.manager.update_log_config(log_formatter="text")
        self.manager.log_activity("分箱完成", bins=47)
        with open(os.path.join(self.logs_dir, "activity.log"), encoding="utf-8") as f:
            line = f.read().strip()
        self.assertIn("[INFO] 分箱完成", line)
        self.assertTrue(line.endswith("bins=47"))

    def test_rotation(self):
        """测试超过大小上限后轮转到 .1 备份"""
        self.manager.update_log_config(max_log_size=10)
        self.manager.log_activity("第一条")
        self.manager.log_activity("第二条")
        path = os.path.join(self.logs_dir, "activity.log")
        self.assertTrue(os.path.exists(path + ".1"))
        self.assertEqual([e["message"] for e in self.read_lines("activity")], ["第二条"])

    def test_analyze_and_clear(self):
        """测试汇总统计与清空"""
        self.manager.log_warning("告警")
        self.manager.log_audit("fuse", False, error="单一类别")
        self.manager.log_audit("trend", True)
        report = self.manager.analyze_logs()
        self.assertEqual(report["total_logs"], 3)
        self.assertEqual(report["warnings"], 1)
        self.assertEqual(report["failed_operations"], ["fuse"])
        self.assertEqual(report["logs_by_type"], {"activity": 1, "audit": 2})
        self.manager.clear_logs()
        self.assertEqual(self.manager.analyze_logs()["total_logs"], 0)
        self.assertEqual(self.manager.log_counter["audit"], 0)


if __name__ == "__main__":
    unittest.main()
