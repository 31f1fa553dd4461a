#!/usr/bin/env python3
"""
测试情感评分、词典类别、互动特征、人格 / 人口统计提供者与组间检验
"""

import math
import os
import shutil
import tempfile
import unittest
from datetime import datetime, timedelta, timezone
from unittest.mock import MagicMock

import numpy as np
import requests
from scipy import stats

from src.config import PipelineConfig
from src.core.features import (FEATURE_COLUMNS, CORE_CATEGORIES, Composite, Lexicon, assemble_user_features,
                               compare_groups, count_categories, engagement_features, extract_features,
                               feature_frame, group_difference_test, load_feature_table, load_lexicon,
                               save_feature_table, score_sentiment)
from src.core.pipeline import PipelineRunner
from src.core.textprep import normalize
from src.data.corpus import DP, ND, Tweet, UserProfile, UserRecord
from src.data.providers import (AGE_BINS, DEFAULT_PERSONALITY_CALIBRATION, TRAITS, HttpPersonalityProvider,
                                LexiconPosProvider, StubDemographicsProvider, StubPersonalityProvider,
                                beta_parameters)
from src.data.synthetic import SynthSpec, generate_synthetic
from src.errors import ConfigError, DataValidationError, LexiconError

START = datetime(2020, 2, 1, tzinfo=timezone.utc)


def tokens(text):
    return normalize(text).tokens


def make_tweet(i, mentions=(), is_reply=False, text="hello there"):
    return Tweet(f"t{i}", "u", START + timedelta(hours=i), text, tuple(mentions), is_reply)


def small_lexicon():
    return Lexicon(
        categories={"i": ("i", "me"), "posemo": ("love*", "good"), "negemo": ("bad",)},
        composites={"tone": Composite(50.0, (("posemo", 0.5),)), "gloom": Composite(-20.0, (("negemo", 1.0),))},
        valence={"good": 2.0, "bad": -2.0},
        boosters={"very": 1.0, "barely": -1.0},
        negators=frozenset({"not"}),
    )


class TestSentiment(unittest.TestCase):
    """测试规则情感评分"""

    def setUp(self):
        self.lexicon = small_lexicon()

    def test_plain_valence(self):
        """测试按单词数归一化"""
        self.assertEqual(score_sentiment(tokens("good day"), self.lexicon), (0.25, 0.0))
        self.assertEqual(score_sentiment(tokens("bad day"), self.lexicon), (0.0, 0.25))

    def test_booster_and_dampener(self):
        """测试前置强化词与弱化词"""
        self.assertAlmostEqual(score_sentiment(tokens("very good"), self.lexicon)[0], 0.375)
        self.assertAlmostEqual(score_sentiment(tokens("barely good"), self.lexicon)[0], 0.125)

    def test_negation_flips_polarity(self):
        """测试三词窗口内的否定词翻转极性"""
        self.assertEqual(score_sentiment(tokens("not good"), self.lexicon), (0.0, 0.25))
        pos, neg = score_sentiment(tokens("not one two three good"), self.lexicon)
        self.assertGreater(pos, 0.0, "超出否定窗口时不翻转")
        self.assertEqual(neg, 0.0)

    def test_emphasis_tokens(self):
        """测试大写与拉长标记增强强度"""
        self.assertAlmostEqual(score_sentiment(tokens("GOOD"), self.lexicon)[0], 2.25 / 4.0)
        self.assertAlmostEqual(score_sentiment(tokens("gooood"), small_lexicon())[0], 0.0,
                               msg="拉长后还原为 god，不在效价表中")

    def test_empty(self):
        """测试没有单词时得分为零"""
        self.assertEqual(score_sentiment(tokens("!!! @bob"), self.lexicon), (0.0, 0.0))

    def test_scores_bounded(self):
        """测试默认词典的得分位于 [0,1]"""
        lexicon = load_lexicon()
        pos, neg = score_sentiment(tokens("SOOO HAPPY!!! love love it, not hopeless at all"), lexicon)
        self.assertTrue(0.0 <= pos <= 1.0 and 0.0 <= neg <= 1.0)


class TestLexiconCategories(unittest.TestCase):
    """测试词典类别比率"""

    def test_rates_per_hundred_words(self):
        """测试每百词比率、前缀匹配与组合类别截断"""
        rates = count_categories(tokens("i love loving me too"), small_lexicon())
        self.assertAlmostEqual(rates["i"], 40.0)
        self.assertAlmostEqual(rates["posemo"], 20.0, msg="love* 不匹配 loving")
        self.assertAlmostEqual(rates["negemo"], 0.0)
        self.assertAlmostEqual(rates["tone"], 60.0)
        self.assertEqual(rates["gloom"], 0.0, "组合类别截断到 0")

    def test_empty_tokens(self):
        """测试空输入时全部类别为 0"""
        rates = count_categories([], small_lexicon())
        self.assertEqual(set(rates), {"i", "posemo", "negemo", "tone", "gloom"})
        self.assertTrue(all(v == 0.0 for v in rates.values()))

    def test_composite_must_reference_base(self):
        """测试组合类别引用未知类别属于配置错误（退出码 2）"""
        with self.assertRaises(ConfigError) as ctx:
            Lexicon.from_dict({"categories": {"i": ["i"]},
                               "composites": {"tone": {"intercept": 0, "weights": {"missing": 1}}}}, required=())
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_required_categories(self):
        """测试缺少必需类别时报错"""
        with self.assertRaises(LexiconError):
            Lexicon.from_dict({"categories": {"i": ["i"]}})

    def test_valence_range(self):
        """测试效价超出 [-4,4] 时报错"""
        with self.assertRaises(LexiconError):
            Lexicon.from_dict({"categories": {}, "valence": {"wow": 7}}, required=())

    def test_default_lexicon_has_all_categories(self):
        """测试内置词典覆盖全部必需类别"""
        lexicon = load_lexicon()
        for category in CORE_CATEGORIES:
            self.assertIn(category, lexicon.category_names)

    def test_missing_lexicon_file(self):
        """测试词典文件不存在"""
        with self.assertRaises(LexiconError) as ctx:
            load_lexicon(os.path.join(tempfile.gettempdir(), "no-such-lexicon.json"))
        self.assertIn("不存在或格式无效", str(ctx.exception))


class TestEngagement(unittest.TestCase):
    """测试互动特征"""

    def test_empty_history(self):
        """测试没有推文时所有对数特征为 log10(0.1) = -1"""
        engagement = engagement_features([])
        self.assertEqual(engagement.prop_tweets_with_mentions, 0.0)
        for name in ("log_responses", "log_unique_mentions", "log_mentions", "log_tweets"):
            self.assertAlmostEqual(getattr(engagement, name), -1.0, msg=f"{name} 应为 -1")

    def test_counts(self):
        """测试提及、回复与推文计数"""
        tweets = [make_tweet(0, ["a"]), make_tweet(1, ["a", "b"], is_reply=True), make_tweet(2), make_tweet(3)]
        engagement = engagement_features(tweets)
        self.assertEqual(engagement.prop_tweets_with_mentions, 0.5)
        self.assertAlmostEqual(engagement.log_responses, math.log10(1.1))
        self.assertAlmostEqual(engagement.log_unique_mentions, math.log10(2.1))
        self.assertAlmostEqual(engagement.log_mentions, math.log10(3.1))
        self.assertAlmostEqual(engagement.log_tweets, math.log10(4.1))


class TestProviders(unittest.TestCase):
    """测试人格与人口统计提供者"""

    def setUp(self):
        self.users = [UserRecord(UserProfile(f"u{i:04d}")) for i in range(1000)]

    def test_personality_calibration(self):
        """测试 1000 个用户的人格分数均值与标准差接近校准目标"""
        provider = StubPersonalityProvider(seed=19)
        scores = [provider.personality(u) for u in self.users]
        for trait in TRAITS:
            values = np.array([s[trait] for s in scores])
            mean, sd = DEFAULT_PERSONALITY_CALIBRATION[trait]
            self.assertTrue(np.all((values >= 0) & (values <= 1)), f"{trait} 应位于 [0,1]")
            self.assertAlmostEqual(values.mean(), mean, delta=0.03, msg=f"{trait} 均值偏离校准目标")
            self.assertAlmostEqual(values.std(), sd, delta=0.03, msg=f"{trait} 标准差偏离校准目标")

    def test_configured_calibration_reaches_provider(self):
        """测试 synth.personality_calibration 决定流水线使用的人格分布"""
        calibration = {t: [0.5, 0.1] for t in TRAITS}
        calibration["openness"] = [0.9, 0.05]
        config = PipelineConfig(settings={"synth": {"personality_calibration": calibration}})
        provider = PipelineRunner(config)._personality_provider(config.section("features"))
        self.assertEqual(provider.parameters["openness"], beta_parameters(0.9, 0.05))
        values = np.array([provider.personality(u)["openness"] for u in self.users[:300]])
        self.assertAlmostEqual(values.mean(), 0.9, delta=0.02)

    def test_invalid_calibration_rejected(self):
        """测试无法构成 Beta 分布或缺少特质的校准"""
        with self.assertRaises(ConfigError):
            SynthSpec(personality_calibration={t: (0.5, 0.6) for t in TRAITS})
        with self.assertRaises(ConfigError):
            SynthSpec(personality_calibration={"openness": (0.5, 0.1)})

    def test_personality_deterministic_per_user(self):
        """测试同一用户得到相同分数"""
        a = StubPersonalityProvider(seed=1).personality(self.users[0])
        b = StubPersonalityProvider(seed=1).personality(self.users[0])
        self.assertEqual(a, b)

    def test_unavailable_rate(self):
        """测试不可用比例"""
        provider = StubPersonalityProvider(seed=2, unavailable_rate=1.0)
        self.assertIsNone(provider.personality(self.users[0]))

    def test_beta_parameters(self):
        """测试 Beta 参数反推均值与方差"""
        a, b = beta_parameters(0.3, 0.2)
        self.assertAlmostEqual(a / (a + b), 0.3)
        self.assertAlmostEqual(a * b / ((a + b) ** 2 * (a + b + 1)), 0.04)
        with self.assertRaises(ConfigError):
            beta_parameters(0.5, 0.6)

    def test_demographics(self):
        """测试性别二元、年龄段独热且比例接近权重"""
        provider = StubDemographicsProvider(seed=3)
        results = [provider.demographics(u) for u in self.users]
        self.assertTrue(all(r.gender in (0, 1) for r in results))
        self.assertTrue(all(sum(r.age_onehot) == 1 for r in results))
        share = sum(1 for r in results if r.age_bin == AGE_BINS[1]) / len(results)
        self.assertAlmostEqual(share, 0.45, delta=0.05)
        with self.assertRaises(ConfigError):
            StubDemographicsProvider(age_weights=(1, 2))

    def test_pos_lexicon(self):
        """测试词表词性标注"""
        provider = LexiconPosProvider({"dog": "NOUN", "Run": "VERB"})
        self.assertEqual(provider.tag(["dog", "run", "xyz"]), ["NOUN", "VERB", "OTHER"])
        with self.assertRaises(ConfigError):
            LexiconPosProvider({"dog": "ANIMAL"})
        self.assertEqual(LexiconPosProvider.from_file().tag(["election"]), ["NOUN"])


class TestHttpPersonalityProvider(unittest.TestCase):
    """测试 HTTP 人格服务提供者"""

    def setUp(self):
        self.session = MagicMock()
        self.provider = HttpPersonalityProvider("https://example.test/personality", api_key="k",
                                                session=self.session)
        self.user = UserRecord(UserProfile("u1"))

    def respond(self, payload):
        response = MagicMock()
        response.json.return_value = payload
        response.raise_for_status.return_value = None
        self.session.post.return_value = response

    def test_success(self):
        """测试正常响应"""
        self.respond({t: 0.5 for t in TRAITS})
        scores = self.provider.personality(self.user, "some text")
        self.assertEqual(scores, {t: 0.5 for t in TRAITS})
        _, kwargs = self.session.post.call_args
        self.assertEqual(kwargs["json"]["user_id"], "u1")
        self.assertEqual(kwargs["headers"]["Authorization"], "Bearer k")

    def test_request_failure(self):
        """测试请求异常视为不可用"""
        self.session.post.side_effect = requests.ConnectionError("down")
        self.assertIsNone(self.provider.personality(self.user, "text"))

    def test_out_of_range_or_missing(self):
        """测试越界分数或缺少特质视为不可用"""
        self.respond({t: 2.0 for t in TRAITS})
        self.assertIsNone(self.provider.personality(self.user, "text"))
        self.respond({"openness": 0.5})
        self.assertIsNone(self.provider.personality(self.user, "text"))


class TestUserFeatures(unittest.TestCase):
    """测试用户特征汇总与特征表"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.lexicon = load_lexicon()
        self.users = generate_synthetic(SynthSpec(n_dp=20, n_nd=20, seed=5))
        self.labels = {u.user_id: u.label for u in self.users}

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_short_history_incomplete(self):
        """测试单词数不足时人格不可用、特征不完整"""
        user = UserRecord(UserProfile("s"), (make_tweet(0, text="just a few words"),))
        vector = assemble_user_features(user, self.lexicon, StubPersonalityProvider(), StubDemographicsProvider())
        self.assertIsNone(vector.personality)
        self.assertFalse(vector.complete)
        self.assertIsNotNone(vector.gender, "人口统计不依赖单词数")

    def test_parallel_matches_serial(self):
        """测试线程池提取与串行结果一致且保持顺序"""
        pp, dp_ = StubPersonalityProvider(seed=1), StubDemographicsProvider(seed=1)
        serial = extract_features(self.users, self.lexicon, pp, dp_, jobs=1)
        parallel = extract_features(self.users, self.lexicon, pp, dp_, jobs=4)
        self.assertEqual(serial, parallel)
        self.assertTrue(all(v.complete for v in serial), "合成用户单词数充足，特征应完整")

    def test_feature_frame_columns(self):
        """测试特征表列顺序固定"""
        vectors = extract_features(self.users[:3], self.lexicon, StubPersonalityProvider(),
                                   StubDemographicsProvider())
        frame = feature_frame(vectors, self.labels)
        self.assertEqual(list(frame.columns), ["user_id", "label", "complete", *FEATURE_COLUMNS])

    def test_feature_table_preserves_missing(self):
        """测试不可用字段在特征表中保持为空"""
        vectors = extract_features(self.users[:4], self.lexicon, StubPersonalityProvider(unavailable_rate=1.0),
                                   StubDemographicsProvider())
        path = os.path.join(self.test_dir, "features.csv")
        self.assertEqual(save_feature_table(vectors, self.labels, path), 4)
        loaded = load_feature_table(path)
        self.assertEqual([v.user_id for v in loaded], [v.user_id for v in vectors])
        self.assertTrue(all(v.personality is None and not v.complete for v in loaded))
        self.assertEqual([v.gender for v in loaded], [v.gender for v in vectors])

    def test_compare_groups_detects_planted_negativity(self):
        """测试 DP 组的负面情感显著高于 ND 组"""
        vectors = extract_features(self.users, self.lexicon, StubPersonalityProvider(), StubDemographicsProvider())
        table = compare_groups(vectors, self.labels).set_index("feature")
        row = table.loc["sentiment_neg"]
        self.assertEqual((row["n_dp"], row["n_nd"]), (20, 20))
        self.assertGreater(row["median_dp"], row["median_nd"])
        self.assertLess(row["p_value"], 0.01)
        self.assertTrue(((table["p_value"] >= 0) & (table["p_value"] <= 1)).all())


class TestGroupDifference(unittest.TestCase):
    """测试 Mann-Whitney U 检验"""

    def test_exact_small_sample(self):
        """测试小样本精确 p 值"""
        u, p = group_difference_test([1, 2, 3], [4, 5, 6])
        self.assertEqual(u, 0.0)
        self.assertAlmostEqual(p, 0.1)

    def test_symmetric(self):
        """测试交换样本时 p 值不变、U 互补"""
        u1, p1 = group_difference_test([1, 5, 7, 8], [2, 3, 4])
        u2, p2 = group_difference_test([2, 3, 4], [1, 5, 7, 8])
        self.assertEqual(u1 + u2, 12.0)
        self.assertAlmostEqual(p1, p2)

    def test_all_tied(self):
        """测试全部相等时 p = 1"""
        self.assertEqual(group_difference_test([2, 2], [2, 2, 2])[1], 1.0)

    def test_large_sample_matches_scipy(self):
        """测试大样本正态近似与 scipy 一致"""
        rng = np.random.default_rng(0)
        a, b = rng.normal(0, 1, 40), rng.normal(0.5, 1, 50)
        u, p = group_difference_test(a, b)
        expected = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic")
        self.assertAlmostEqual(u, float(expected.statistic))
        self.assertAlmostEqual(p, float(expected.pvalue))

    def test_empty_sample(self):
        """测试空样本报错"""
        with self.assertRaises(DataValidationError):
            group_difference_test([], [1.0])


if __name__ == "__main__":
    unittest.main()
