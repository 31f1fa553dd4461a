#!/usr/bin/env python3
"""
测试语料读写、校验、合成语料与统计
"""

import json
import os
import shutil
import tempfile
import unittest
from datetime import date, datetime, timezone

from src.data.corpus import DP, ND, Tweet, UserProfile, UserRecord, load_corpus, save_corpus, validate_corpus
from src.data.statistics import StatisticsManager, corpus_summary
from src.data.synthetic import SynthSpec, SynthVocabulary, generate_synthetic
from src.errors import ConfigError, CorpusFormatError


def tweet(tweet_id, user_id, day, text="hello"):
    return Tweet(tweet_id, user_id, datetime(2020, 1, day, 12, tzinfo=timezone.utc), text)


class TestCorpusIO(unittest.TestCase):
    """测试 JSONL 语料读写"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, "corpus.jsonl")

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def write_lines(self, rows):
        with open(self.path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write((row if isinstance(row, str) else json.dumps(row)) + "\n")

    def test_save_and_load(self):
        """测试保存后加载得到相同用户"""
        users = [
            UserRecord(UserProfile("a", description="hi"), (tweet("a-1", "a", 1), tweet("a-2", "a", 2)),
                       label=DP, anchor_date=date(2020, 1, 2), state_code="NY"),
            UserRecord(UserProfile("b"), (tweet("b-1", "b", 3),), label=ND),
        ]
        self.assertEqual(save_corpus(users, self.path), 2, "应写出两行")
        loaded = load_corpus(self.path)
        self.assertEqual([u.user_id for u in loaded], ["a", "b"])
        self.assertEqual(loaded[0].anchor_date, date(2020, 1, 2))
        self.assertEqual(loaded[0].tweets[0].state_code, "NY", "推文继承用户的地区代码")
        self.assertEqual(loaded[1].label, ND)

    def test_tweets_sorted_by_timestamp(self):
        """测试加载后推文按时间升序排列"""
        self.write_lines([{
            "user_id": "a",
            "tweets": [
                {"tweet_id": "2", "timestamp": "2020-01-05T00:00:00Z", "text": "later"},
                {"tweet_id": "1", "timestamp": "2020-01-01T00:00:00Z", "text": "earlier"},
            ],
        }])
        users = load_corpus(self.path)
        self.assertEqual([t.tweet_id for t in users[0].tweets], ["1", "2"])

    def test_malformed_line_reports_line_number(self):
        """测试格式错误报告行号"""
        self.write_lines([{"user_id": "a", "tweets": []}, "{not json"])
        with self.assertRaises(CorpusFormatError) as ctx:
            load_corpus(self.path)
        self.assertIn("第 2 行", str(ctx.exception), "错误信息应包含行号")

    def test_duplicate_tweet_id_reported(self):
        """测试重复 tweet_id 报告该 id"""
        row = {"tweet_id": "dup", "timestamp": "2020-01-01T00:00:00Z", "text": "x"}
        self.write_lines([{"user_id": "a", "tweets": [row]}, {"user_id": "b", "tweets": [row]}])
        with self.assertRaises(CorpusFormatError) as ctx:
            load_corpus(self.path)
        self.assertIn("dup", str(ctx.exception))

    def test_unknown_label_rejected(self):
        """测试未知标签被拒绝"""
        self.write_lines([{"user_id": "a", "label": "MAYBE", "tweets": []}])
        with self.assertRaises(CorpusFormatError):
            load_corpus(self.path)

    def test_same_user_across_lines_merged(self):
        """测试同一用户跨多行时推文被合并"""
        self.write_lines([
            {"user_id": "a", "tweets": [{"tweet_id": "2", "timestamp": "2020-01-02T00:00:00Z", "text": "b"}]},
            {"user_id": "a", "tweets": [{"tweet_id": "1", "timestamp": "2020-01-01T00:00:00Z", "text": "a"}]},
        ])
        users = load_corpus(self.path)
        self.assertEqual(len(users), 1)
        self.assertEqual([t.tweet_id for t in users[0].tweets], ["1", "2"])


class TestValidateCorpus(unittest.TestCase):
    """测试语料校验"""

    def test_valid_corpus(self):
        """测试合法语料没有违规项"""
        users = [UserRecord(UserProfile("a"), (tweet("a-1", "a", 1),), label=DP, anchor_date=date(2020, 1, 1))]
        report = validate_corpus(users)
        self.assertTrue(report.ok, f"不应有违规项: {report.violations}")
        self.assertEqual((report.n_users, report.n_tweets, report.n_dp), (1, 1, 1))

    def test_violations_collected(self):
        """测试各类违规项作为数据返回"""
        users = [
            UserRecord(UserProfile("a"), (tweet("x", "a", 2), tweet("y", "a", 1)), label=DP),
            UserRecord(UserProfile("b"), (tweet("x", "other", 3),), label=ND),
        ]
        report = validate_corpus(users)
        text = "\n".join(report.violations)
        self.assertFalse(report.ok)
        self.assertIn("anchor_date", text, "缺少锚定日期应被报告")
        self.assertIn("重复的 tweet_id: x", text)
        self.assertIn("未按时间升序", text)
        self.assertIn("不一致", text)


class TestSyntheticCorpus(unittest.TestCase):
    """测试合成语料生成"""

    def test_deterministic(self):
        """测试相同参数生成完全相同的语料"""
        spec = SynthSpec(n_dp=20, n_nd=20, seed=5)
        self.assertEqual(generate_synthetic(spec), generate_synthetic(spec), "同一 seed 的输出必须一致")

    def test_seed_changes_output(self):
        """测试不同 seed 生成不同语料"""
        a = generate_synthetic(SynthSpec(n_dp=10, n_nd=10, seed=1))
        b = generate_synthetic(SynthSpec(n_dp=10, n_nd=10, seed=2))
        self.assertNotEqual([u.tweets for u in a], [u.tweets for u in b])

    def test_counts_and_validity(self):
        """测试标签数量、日期范围与校验结果"""
        spec = SynthSpec(n_dp=30, n_nd=40, seed=9)
        users = generate_synthetic(spec)
        self.assertEqual(sum(1 for u in users if u.label == DP), 30)
        self.assertEqual(sum(1 for u in users if u.label == ND), 40)
        self.assertTrue(validate_corpus(users).ok, "合成语料应通过校验")
        for user in users:
            self.assertTrue(spec.tweets_per_user[0] <= len(user.tweets) <= spec.tweets_per_user[1])
            self.assertTrue(all(spec.start_date <= t.day <= spec.end_date for t in user.tweets))
            if user.label == DP:
                self.assertEqual(user.anchor_date, user.tweets[-1].day, "DP 锚定日期为最新推文日期")

    def test_signal_rate_separates_groups(self):
        """测试 DP 组信号词比例明显高于 ND 组"""
        vocab = SynthVocabulary.load()
        signal = set(vocab.signal)
        users = generate_synthetic(SynthSpec(n_dp=40, n_nd=40, seed=3, plant_self_reports=False, mention_rate=0.0))
        rates = {DP: [0, 0], ND: [0, 0]}
        for user in users:
            words = [w for t in user.tweets for w in t.text.split()]
            rates[user.label][0] += sum(1 for w in words if w in signal)
            rates[user.label][1] += len(words)
        dp_rate = rates[DP][0] / rates[DP][1]
        nd_rate = rates[ND][0] / rates[ND][1]
        self.assertAlmostEqual(dp_rate, 0.08, delta=0.01, msg="DP 信号率应接近 0.08")
        self.assertAlmostEqual(nd_rate, 0.01, delta=0.005, msg="ND 信号率应接近 0.01")

    def test_step_change_raises_late_rate(self):
        """测试阶跃日期之后 DP 信号率上升"""
        vocab = SynthVocabulary.load()
        signal = set(vocab.signal)
        spec = SynthSpec(n_dp=30, n_nd=0, seed=4, plant_self_reports=False, mention_rate=0.0,
                         step_date=date(2020, 3, 13), step_rate_dp=0.3)
        before, after = [0, 0], [0, 0]
        for user in generate_synthetic(spec):
            for t in user.tweets:
                words = t.text.split()
                bucket = after if t.day >= spec.step_date else before
                bucket[0] += sum(1 for w in words if w in signal)
                bucket[1] += len(words)
        self.assertGreater(after[0] / after[1], 2 * before[0] / before[1], "阶跃后信号率应明显升高")

    def test_invalid_spec(self):
        """测试无效参数抛出 ConfigError"""
        with self.assertRaises(ConfigError):
            SynthSpec(n_dp=-1)
        with self.assertRaises(ConfigError):
            SynthSpec(signal_rate_dp=1.5)
        with self.assertRaises(ConfigError):
            SynthSpec(words_per_tweet=(5, 2))

    def test_from_dict(self):
        """测试由配置段构造并忽略未知键"""
        spec = SynthSpec.from_dict({"n_dp": 3, "words_per_tweet": [4, 6], "step_date": "2020-03-01",
                                    "unknown": True})
        self.assertEqual(spec.n_dp, 3)
        self.assertEqual(spec.words_per_tweet, (4, 6))
        self.assertEqual(spec.step_date, date(2020, 3, 1))

    def test_empty(self):
        """测试零用户"""
        self.assertEqual(generate_synthetic(SynthSpec(n_dp=0, n_nd=0)), [])


class TestStatistics(unittest.TestCase):
    """测试语料统计"""

    def test_summary(self):
        """测试统计概览"""
        users = [
            UserRecord(UserProfile("a"), (tweet("a-1", "a", 1), tweet("a-2", "a", 4)), label=DP,
                       anchor_date=date(2020, 1, 4), state_code="CA"),
            UserRecord(UserProfile("b"), (tweet("b-1", "b", 2),), label=ND),
            UserRecord(UserProfile("c"), ()),
        ]
        summary = corpus_summary(users)
        self.assertEqual(summary["total_users"], 3)
        self.assertEqual((summary["dp_users"], summary["nd_users"], summary["unlabeled_users"]), (1, 1, 1))
        self.assertEqual(summary["total_tweets"], 3)
        self.assertEqual(summary["average_tweets_per_user"], 1.0)
        self.assertEqual(summary["max_tweets_per_user"], 2)
        self.assertEqual((summary["first_date"], summary["last_date"]), ("2020-01-01", "2020-01-04"))
        self.assertEqual(summary["geo_located_users"], 1)

    def test_empty_summary(self):
        """测试空语料统计"""
        summary = corpus_summary([])
        self.assertEqual(summary["total_users"], 0)
        self.assertIsNone(summary["first_date"])

    def test_daily_statistics(self):
        """测试按日推文量"""
        manager = StatisticsManager([
            UserRecord(UserProfile("a"), (tweet("a-1", "a", 1), tweet("a-2", "a", 1)), label=DP),
            UserRecord(UserProfile("b"), (tweet("b-1", "b", 1),)),
        ])
        daily = manager.get_daily_statistics()
        self.assertEqual(daily["2020-01-01"], {"tweets": 3, DP: 2, "unlabeled": 1})


if __name__ == "__main__":
    unittest.main()
