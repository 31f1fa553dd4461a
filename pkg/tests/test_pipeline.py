#!/usr/bin/env python3
"""
测试命令行入口：完整流水线、运行清单、按清单重跑与退出码
"""

import contextlib
import io
import json
import os
import shutil
import tempfile
import time
import unittest
from unittest import mock

import pandas as pd

from src.cli import main
from src.core.pipeline import config_from_manifest, load_manifest, verify_outputs
from src.errors import ConfigError, ModelError
from src.utils.helpers import compute_file_hash, load_json_file
from src.utils.logging_manager import configure_logging

# 小规模配置，保证整条流水线在测试中快速完成
SMALL_RUN = [
    "--synth.n_dp", "60",
    "--synth.n_nd", "60",
    "--split.max_test_fraction", "0.25",
    "--scorer.n_features", "16384",
    "--scorer.epochs", "3",
    "--scorer.learning_curve_sizes", "[20, 40]",
    "--fusion.importance_repeats", "2",
    "--fusion.n_trees", "20",
    "--topics.iterations", "20",
    "--topics.K", "3",
    "--trend.min_users", "10",
]

EXPECTED_ARTIFACTS = (
    "corpus.jsonl", "cohort.jsonl", "cohort_report.json", "chunks.jsonl", "trend_chunks.jsonl", "split.json",
    "model.bin", "training.json", "chunk_scores.csv", "trend_scores.csv", "user_scores.csv", "features.csv",
    "group_tests.csv", "fusion_metrics.json", "importance.csv", "fusion_predictions.csv", "eval_metrics.json",
    "learning_curve.csv", "trend/DP.csv", "trend/ND.csv", "trend/geo_ALL.csv", "trend_report.json",
    "topics_before.json", "topics_after.json", "topics_states.json",
)


def run_cli(argv):
    """执行命令行并捕获标准输出与标准错误"""
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class TestPipelineRun(unittest.TestCase):
    """测试完整流水线"""

    @classmethod
    def setUpClass(cls):
        cls.test_dir = tempfile.mkdtemp()
        cls.output = os.path.join(cls.test_dir, "run")
        cls.code, _, cls.stderr = run_cli(["pipeline", "--output", cls.output] + SMALL_RUN)
        cls.manifest_path = os.path.join(cls.output, "manifests", "pipeline.json")

    @classmethod
    def tearDownClass(cls):
        configure_logging(None)
        shutil.rmtree(cls.test_dir)

    def test_exit_code(self):
        """测试流水线成功退出"""
        self.assertEqual(self.code, 0, f"流水线应成功: {self.stderr}")

    def test_artifacts_written(self):
        """测试各阶段产物均已提交，暂存目录已清理"""
        for name in EXPECTED_ARTIFACTS:
            self.assertTrue(os.path.isfile(os.path.join(self.output, name)), f"缺少产物 {name}")
        self.assertFalse([d for d in os.listdir(self.output) if d.startswith(".staging-")], "暂存目录应被清理")
        self.assertTrue(os.path.isfile(os.path.join(self.output, "logs", "audit.log")), "应写出审计日志")

    def test_topic_reports(self):
        """测试每个时段一个 DP/ND 共用的模型，分州模型汇报各州与 ALL 的主导主题占比"""
        for period in ("before", "after"):
            report = load_json_file(os.path.join(self.output, f"topics_{period}.json"))
            self.assertEqual(report["K"], 3)
            self.assertEqual(set(report["groups"]), {"DP", "ND"})
            self.assertEqual(sum(g["n_docs"] for g in report["groups"].values()), report["n_docs"])
            self.assertEqual([t["dominant_count"] for t in report["topics"]],
                             [a + b for a, b in zip(report["groups"]["DP"]["dominant_counts"],
                                                    report["groups"]["ND"]["dominant_counts"])])
        states = load_json_file(os.path.join(self.output, "topics_states.json"))
        self.assertEqual(set(states["states"]), {"NY", "CA", "FL", "ALL"})
        self.assertEqual(states["states"]["ALL"]["n_docs"], states["n_docs"])
        self.assertEqual((states["start"], states["end"]), ("2020-03-03", "2020-05-22"))
        self.assertFalse([f for f in os.listdir(self.output) if f.startswith("topics_") and f.count("_") > 1],
                         "不再按分组单独训练模型")

    def test_stage_manifests(self):
        """测试每个子命令都有清单，且记录的哈希与文件一致"""
        for stage in ("synth", "cohort", "chunk", "train", "score", "features", "fuse", "eval", "trend", "topics"):
            manifest = load_manifest(os.path.join(self.output, "manifests", f"{stage}.json"))
            self.assertEqual(manifest["subcommand"], stage)
            self.assertTrue(manifest["outputs"], f"{stage} 清单应记录产物")
            for relative, digest in manifest["outputs"].items():
                self.assertEqual(compute_file_hash(os.path.join(self.output, relative)), digest)

    def test_pipeline_manifest(self):
        """测试流水线清单汇总阶段、种子与全部产物"""
        manifest = load_manifest(self.manifest_path)
        self.assertEqual(manifest["stages"][0], "synth")
        self.assertEqual(manifest["stages"][-1], "topics")
        self.assertEqual(manifest["config"]["synth"]["n_dp"], 60)
        self.assertEqual(manifest["seeds"]["synth"], 7)
        self.assertEqual(manifest["seeds"]["fusion"], 23)
        for name in EXPECTED_ARTIFACTS:
            self.assertIn(name, manifest["outputs"])
        self.assertIn("cpu_count", manifest["host"])
        self.assertEqual(verify_outputs(manifest, self.output), {})

    def test_split_and_cohort(self):
        """测试队列规模与测试集划分"""
        report = load_json_file(os.path.join(self.output, "cohort_report.json"))
        self.assertGreater(report["n_dp"], 50, "植入自述的 DP 用户应基本全部被识别")
        self.assertEqual(report["n_nd"], report["n_dp"], "对照组规模默认与 DP 相同")
        daily = report["daily_tweets"]
        self.assertEqual(sum(day["tweets"] for day in daily.values()), report["summary"]["total_tweets"])
        self.assertEqual(sorted(daily), list(daily), "按日统计应按日期排序")
        self.assertEqual(sum(day.get("DP", 0) for day in daily.values()) + sum(day.get("ND", 0) for day in daily.values()),
                         report["summary"]["total_tweets"])
        split = load_json_file(os.path.join(self.output, "split.json"))
        self.assertEqual(len(split["test"]), int(0.25 * (report["n_dp"] + report["n_nd"])))
        self.assertFalse(set(split["train"]) & set(split["test"]), "训练与测试用户不能重叠")

    def test_learning_curve(self):
        """测试学习曲线按配置的规模计算"""
        curve = pd.read_csv(os.path.join(self.output, "learning_curve.csv"))
        self.assertEqual(list(curve["size"]), [20, 40])

    def test_rerun_from_manifest_verifies(self):
        """测试按清单在新目录重跑，产物哈希逐一一致"""
        other = os.path.join(self.test_dir, "rerun")
        code, stdout, stderr = run_cli(["pipeline", "--from-manifest", self.manifest_path, "--output", other,
                                        "--verify"])
        self.assertEqual(code, 0, f"按清单重跑应成功且哈希一致: {stderr}")
        self.assertIn("一致", stdout)

    def test_verify_detects_changes(self):
        """测试产物被修改时校验报告不一致"""
        manifest = load_manifest(self.manifest_path)
        copy_dir = os.path.join(self.test_dir, "copy")
        shutil.copytree(self.output, copy_dir)
        with open(os.path.join(copy_dir, "split.json"), "a", encoding="utf-8") as f:
            f.write(" ")
        os.remove(os.path.join(copy_dir, "trend_report.json"))
        mismatches = verify_outputs(manifest, copy_dir)
        self.assertEqual(set(mismatches), {"split.json", "trend_report.json"})
        self.assertIsNone(mismatches["trend_report.json"]["actual"])


class TestDefaultScaleRun(unittest.TestCase):
    """测试默认配置下 200 用户合成语料的完整流水线在 10 分钟内完成"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        configure_logging(None)
        shutil.rmtree(self.test_dir)

    def test_default_pipeline_wall_time(self):
        """测试默认参数（1000 轮 Gibbs 采样、2^18 哈希特征）下全部产物写出且耗时 < 600 秒"""
        output = os.path.join(self.test_dir, "default")
        started = time.perf_counter()
        code, _, stderr = run_cli(["pipeline", "--output", output])
        elapsed = time.perf_counter() - started
        self.assertEqual(code, 0, stderr)
        self.assertLess(elapsed, 600.0)
        manifest = load_manifest(os.path.join(output, "manifests", "pipeline.json"))
        self.assertEqual(manifest["config"]["synth"]["n_dp"] + manifest["config"]["synth"]["n_nd"], 200)
        self.assertEqual(manifest["config"]["topics"]["iterations"], 1000)
        for name in EXPECTED_ARTIFACTS:
            self.assertIn(name, manifest["outputs"])
        self.assertEqual(verify_outputs(manifest, output), {})


class TestCliErrors(unittest.TestCase):
    """测试命令行错误与退出码"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.output = os.path.join(self.test_dir, "out")

    def tearDown(self):
        configure_logging(None)
        shutil.rmtree(self.test_dir)

    def test_missing_corpus(self):
        """测试语料不存在时以配置错误退出且不创建输出目录"""
        code, _, stderr = run_cli(["pipeline", "--output", self.output,
                                   "--corpus", os.path.join(self.test_dir, "none.jsonl")])
        self.assertEqual(code, 2)
        self.assertIn("none.jsonl", stderr)
        self.assertFalse(os.path.exists(self.output))

    def test_verify_requires_manifest(self):
        """测试 --verify 必须与 --from-manifest 同时使用"""
        code, _, _ = run_cli(["trend", "--output", self.output, "--verify"])
        self.assertEqual(code, 2)

    def test_bad_override(self):
        """测试未知配置项"""
        code, _, stderr = run_cli(["synth", "--output", self.output, "--trend.bins", "3"])
        self.assertEqual(code, 2)
        self.assertIn("trend", stderr)

    def test_invalid_value(self):
        """测试取值越界在运行前被拒绝"""
        code, _, _ = run_cli(["synth", "--output", self.output, "--trend.window", "4"])
        self.assertEqual(code, 2)

    def test_missing_prior_artifact(self):
        """测试缺少前序产物时以配置错误退出"""
        code, _, stderr = run_cli(["train", "--output", self.output])
        self.assertEqual(code, 2)
        self.assertIn("chunks.jsonl", stderr)

    def test_malformed_corpus(self):
        """测试语料格式错误以数据校验错误退出"""
        corpus = os.path.join(self.test_dir, "bad.jsonl")
        with open(corpus, "w", encoding="utf-8") as f:
            f.write("{not json}\n")
        code, _, _ = run_cli(["cohort", "--output", self.output, "--corpus", corpus])
        self.assertEqual(code, 3)

    def test_synth_then_cohort(self):
        """测试单独运行子命令并写出各自清单"""
        self.assertEqual(run_cli(["synth", "--output", self.output, "--synth.n_dp", "10", "--synth.n_nd", "10"])[0], 0)
        self.assertEqual(run_cli(["cohort", "--output", self.output])[0], 0)
        manifest = load_manifest(os.path.join(self.output, "manifests", "cohort.json"))
        self.assertIn("corpus.jsonl", manifest["inputs"])
        self.assertEqual(sorted(manifest["outputs"]), ["cohort.jsonl", "cohort_report.json"])

    def test_failed_stage_removes_partial_outputs(self):
        """测试中途阶段失败时以运行失败退出，之前阶段的产物与清单全部删除，只保留日志"""
        with mock.patch("src.core.fusion.train_fusion", side_effect=ModelError("训练集只有一个类别")):
            code, _, stderr = run_cli(["pipeline", "--output", self.output] + SMALL_RUN)
        self.assertEqual(code, 4)
        self.assertIn("一个类别", stderr)
        self.assertEqual(os.listdir(self.output), ["logs"])
        with open(os.path.join(self.output, "logs", "audit.log"), encoding="utf-8") as f:
            audit = [json.loads(line) for line in f]
        self.assertEqual([a["operation"] for a in audit if a["success"] == "False"], ["fuse", "pipeline"])

    def test_config_from_manifest(self):
        """测试清单缺失或缺少字段"""
        with self.assertRaises(ConfigError):
            config_from_manifest(os.path.join(self.test_dir, "none.json"))
        path = os.path.join(self.test_dir, "m.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write("{\"outputs\": {}}")
        with self.assertRaises(ConfigError):
            load_manifest(path)


if __name__ == "__main__":
    unittest.main()
