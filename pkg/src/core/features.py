"""用户级特征：规则情感、词典类别比率、互动特征、人格与人口统计，以及组间差异检验"""

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ..data.corpus import DP, ND, Tweet, UserRecord
from ..data.providers import (AGE_BINS, TRAITS, Demographics, DemographicsProvider, PersonalityProvider,
                              RESOURCES_DIR)
from ..errors import ConfigError, DataValidationError, LexiconError
from ..utils.helpers import load_json_file
from ..utils.logging_manager import get_logging_manager
from .textprep import ALLCAPS, ELONGATED, is_word, normalize

CORE_CATEGORIES = ("analytic", "clout", "authentic", "tone", "i", "posemo", "negemo", "anx", "anger",
                    "sad", "swear", "death", "bio", "power", "work")
COMPOSITE_CATEGORIES = ("analytic", "clout", "authentic", "tone")

NEGATION_WINDOW = 3
EMPHASIS_BOOST = 0.25
MAX_VALENCE = 4.0
MIN_PERSONALITY_WORDS = 100
ENGAGEMENT_OFFSET = 0.1

ENGAGEMENT_COLUMNS = ("prop_tweets_with_mentions", "log_responses", "log_unique_mentions", "log_mentions",
                      "log_tweets")
AGE_COLUMNS = tuple(f"age_{b}" for b in AGE_BINS)
CATEGORY_COLUMNS = tuple(f"cat_{c}" for c in CORE_CATEGORIES)

# 融合模型的特征组（列顺序固定）
FEATURE_GROUP_COLUMNS: Dict[str, Tuple[str, ...]] = {
    "V": ("sentiment_pos", "sentiment_neg"),
    "D": ("gender",) + AGE_COLUMNS,
    "E": ENGAGEMENT_COLUMNS,
    "P": TRAITS,
    "L": CATEGORY_COLUMNS,
}
FEATURE_COLUMNS: Tuple[str, ...] = (
    ("sentiment_pos", "sentiment_neg") + ENGAGEMENT_COLUMNS + TRAITS + ("gender",) + AGE_COLUMNS + CATEGORY_COLUMNS
)


@dataclass(frozen=True)
class Composite:
    intercept: float
    weights: Tuple[Tuple[str, float], ...]


@dataclass(frozen=True)
class Lexicon:
    categories: Dict[str, Tuple[str, ...]]
    composites: Dict[str, Composite] = field(default_factory=dict)
    valence: Dict[str, float] = field(default_factory=dict)
    boosters: Dict[str, float] = field(default_factory=dict)
    negators: FrozenSet[str] = frozenset()

    def __post_init__(self):
        exact: Dict[str, List[str]] = {}
        prefixes: List[Tuple[str, str]] = []
        for name, entries in self.categories.items():
            for entry in entries:
                entry = entry.lower()
                if entry.endswith("*"):
                    prefixes.append((entry[:-1], name))
                else:
                    exact.setdefault(entry, []).append(name)
        object.__setattr__(self, "_exact", exact)
        object.__setattr__(self, "_prefixes", tuple(prefixes))
        object.__setattr__(self, "_cache", {})

    @property
    def category_names(self) -> Tuple[str, ...]:
        return tuple(self.categories) + tuple(c for c in self.composites if c not in self.categories)

    def categories_of(self, word: str) -> Tuple[str, ...]:
        """单词命中的基础类别（同一类别只计一次）"""
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        names = dict.fromkeys(self._exact.get(word, ()))
        for prefix, name in self._prefixes:
            if word.startswith(prefix):
                names[name] = None
        result = tuple(names)
        self._cache[word] = result
        return result

    def validate(self, required: Sequence[str] = CORE_CATEGORIES) -> None:
        """组合类别只能引用基础类别；必需类别须存在；效价有限且在 [-4,4]"""
        for name, composite in self.composites.items():
            for base, _ in composite.weights:
                if base not in self.categories:
                    raise ConfigError(f"组合类别 {name} 引用了未知类别: {base}")
        missing = [c for c in required if c not in self.categories and c not in self.composites]
        if missing:
            raise LexiconError(f"词典缺少类别: {', '.join(missing)}")
        for word, value in self.valence.items():
            if not math.isfinite(value) or abs(value) > MAX_VALENCE:
                raise LexiconError(f"效价超出范围: {word}={value}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], required: Sequence[str] = CORE_CATEGORIES) -> "Lexicon":
        try:
            composites = {
                name: Composite(float(spec.get("intercept", 0.0)),
                                tuple((str(k), float(v)) for k, v in spec.get("weights", {}).items()))
                for name, spec in data.get("composites", {}).items()
            }
            lexicon = cls(
                categories={str(k): tuple(str(e) for e in v) for k, v in data.get("categories", {}).items()},
                composites=composites,
                valence={str(k).lower(): float(v) for k, v in data.get("valence", {}).items()},
                boosters={str(k).lower(): float(v) for k, v in data.get("boosters", {}).items()},
                negators=frozenset(str(w).lower() for w in data.get("negators", [])),
            )
        except (AttributeError, TypeError, ValueError) as e:
            raise LexiconError(f"词典格式无效: {e}") from e
        lexicon.validate(required)
        return lexicon


def load_lexicon(path: Optional[str] = None, required: Sequence[str] = CORE_CATEGORIES) -> Lexicon:
    """加载 JSON 词典（默认使用内置的入门词典）"""
    path = path or os.path.join(RESOURCES_DIR, "lexicon.json")
    data = load_json_file(path, default=None)
    if not isinstance(data, dict):
        raise LexiconError(f"词典文件不存在或格式无效: {path}")
    return Lexicon.from_dict(data, required)


def score_sentiment(tokens: Iterable[str], lexicon: Lexicon) -> Tuple[float, float]:
    """规则情感评分，返回按单词数归一化的 (pos, neg)"""
    tokens = list(tokens)
    word_positions = [i for i, t in enumerate(tokens) if is_word(t)]
    if not word_positions:
        return 0.0, 0.0

    pos_total = neg_total = 0.0
    for k, i in enumerate(word_positions):
        word = tokens[i]
        valence = lexicon.valence.get(word)
        if not valence:
            continue
        magnitude = abs(valence)
        if i > 0 and tokens[i - 1] in lexicon.boosters:
            magnitude += lexicon.boosters[tokens[i - 1]]
        if i + 1 < len(tokens) and tokens[i + 1] in (ALLCAPS, ELONGATED):
            magnitude += EMPHASIS_BOOST
        magnitude = min(max(magnitude, 0.0), MAX_VALENCE)

        positive = valence > 0
        preceding = word_positions[max(0, k - NEGATION_WINDOW):k]
        if any(tokens[j] in lexicon.negators for j in preceding):
            positive = not positive
        if positive:
            pos_total += magnitude / MAX_VALENCE
        else:
            neg_total += magnitude / MAX_VALENCE

    n_words = len(word_positions)
    return pos_total / n_words, neg_total / n_words


def count_categories(tokens: Iterable[str], lexicon: Lexicon) -> Dict[str, float]:
    """每百词类别比率；组合类别为基础比率的仿射组合并截断到 [0,100]"""
    words = [t for t in tokens if is_word(t)]
    counts = dict.fromkeys(lexicon.categories, 0)
    for word in words:
        for name in lexicon.categories_of(word):
            counts[name] += 1

    rates: Dict[str, float] = {}
    if not words:
        return {name: 0.0 for name in lexicon.category_names}
    for name, count in counts.items():
        rates[name] = 100.0 * count / len(words)
    for name, composite in lexicon.composites.items():
        value = composite.intercept + sum(w * rates[base] for base, w in composite.weights)
        rates[name] = min(max(value, 0.0), 100.0)
    return rates


@dataclass(frozen=True)
class Engagement:
    prop_tweets_with_mentions: float
    log_responses: float
    log_unique_mentions: float
    log_mentions: float
    log_tweets: float

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in ENGAGEMENT_COLUMNS}


def _log_count(count: int) -> float:
    return math.log10(count + ENGAGEMENT_OFFSET)


def engagement_features(tweets: Sequence[Tweet]) -> Engagement:
    """互动特征：计数加 0.1 后取 log10"""
    with_mentions = sum(1 for t in tweets if t.mentioned_user_ids)
    responses = sum(1 for t in tweets if t.is_reply)
    mentions = [m for t in tweets for m in t.mentioned_user_ids]
    return Engagement(
        prop_tweets_with_mentions=with_mentions / len(tweets) if tweets else 0.0,
        log_responses=_log_count(responses),
        log_unique_mentions=_log_count(len(set(mentions))),
        log_mentions=_log_count(len(mentions)),
        log_tweets=_log_count(len(tweets)),
    )


@dataclass(frozen=True)
class FeatureVector:
    user_id: str
    sentiment_pos: float
    sentiment_neg: float
    category_rates: Dict[str, float]
    engagement: Engagement
    personality: Optional[Dict[str, float]]
    gender: Optional[int]
    age_onehot: Optional[Tuple[int, ...]]
    complete: bool
    word_count: int = 0

    def to_row(self) -> Dict[str, Any]:
        """按固定列顺序展开；不可用的字段为 None"""
        row: Dict[str, Any] = {"sentiment_pos": self.sentiment_pos, "sentiment_neg": self.sentiment_neg}
        row.update(self.engagement.as_dict())
        for trait in TRAITS:
            row[trait] = self.personality.get(trait) if self.personality else None
        row["gender"] = self.gender
        for column, flag in zip(AGE_COLUMNS, self.age_onehot or (None,) * len(AGE_COLUMNS)):
            row[column] = flag
        for category, column in zip(CORE_CATEGORIES, CATEGORY_COLUMNS):
            row[column] = self.category_rates.get(category, 0.0)
        return row


def user_tokens(user: UserRecord, known_words: Optional[frozenset] = None) -> List[str]:
    """用户全部推文规范化标记的拼接"""
    tokens: List[str] = []
    for tweet in user.tweets:
        tokens.extend(normalize(tweet.text, known_words).tokens)
    return tokens


def assemble_user_features(user: UserRecord, lexicon: Lexicon, pp: PersonalityProvider, dp_: DemographicsProvider,
                           min_personality_words: int = MIN_PERSONALITY_WORDS,
                           known_words: Optional[frozenset] = None) -> FeatureVector:
    """汇总用户的五类特征；任一提供者不可用时 complete = False"""
    tokens = user_tokens(user, known_words)
    word_count = sum(1 for t in tokens if is_word(t))
    pos, neg = score_sentiment(tokens, lexicon)

    personality = None
    if word_count >= min_personality_words:
        personality = pp.personality(user, " ".join(t.text for t in user.tweets))
    demographics: Optional[Demographics] = dp_.demographics(user)

    return FeatureVector(
        user_id=user.user_id,
        sentiment_pos=pos,
        sentiment_neg=neg,
        category_rates=count_categories(tokens, lexicon),
        engagement=engagement_features(user.tweets),
        personality=personality,
        gender=demographics.gender if demographics else None,
        age_onehot=demographics.age_onehot if demographics else None,
        complete=personality is not None and demographics is not None,
        word_count=word_count,
    )


def extract_features(users: Sequence[UserRecord], lexicon: Lexicon, pp: PersonalityProvider,
                     dp_: DemographicsProvider, jobs: int = 1, **kwargs) -> List[FeatureVector]:
    """批量提取特征；jobs > 1 时使用线程池，输出顺序与输入一致"""
    def run(user: UserRecord) -> FeatureVector:
        return assemble_user_features(user, lexicon, pp, dp_, **kwargs)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            vectors = list(executor.map(run, users))
    else:
        vectors = [run(u) for u in users]
    incomplete = sum(1 for v in vectors if not v.complete)
    if incomplete:
        get_logging_manager().log_warning("部分用户特征不完整，将不参与融合训练",
                                          incomplete=incomplete, total=len(vectors))
    return vectors


def group_difference_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> Tuple[float, float]:
    """Mann-Whitney U 检验（中秩处理并列）；小样本精确枚举，否则正态近似"""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise DataValidationError("Mann-Whitney 检验的样本不能为空")
    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = stats.rankdata(pooled)
    offset = n1 * (n1 + 1) / 2.0
    u = float(ranks[:n1].sum() - offset)

    if np.all(pooled == pooled[0]):
        return u, 1.0
    if n1 + n2 < 20:
        center = n1 * n2 / 2.0
        observed = abs(u - center) - 1e-9
        total = extreme = 0
        for combo in itertools.combinations(ranks.tolist(), n1):
            total += 1
            if abs(sum(combo) - offset - center) >= observed:
                extreme += 1
        return u, extreme / total
    result = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    return u, float(result.pvalue)


def feature_frame(vectors: Sequence[FeatureVector], labels: Optional[Mapping[str, Optional[str]]] = None
                  ) -> pd.DataFrame:
    """特征表：user_id, label, complete 后接固定顺序的特征列"""
    labels = labels or {}
    rows = []
    for vector in vectors:
        row = {"user_id": vector.user_id, "label": labels.get(vector.user_id), "complete": vector.complete}
        row.update(vector.to_row())
        rows.append(row)
    return pd.DataFrame(rows, columns=["user_id", "label", "complete", *FEATURE_COLUMNS])


def compare_groups(vectors: Sequence[FeatureVector], labels: Mapping[str, Optional[str]]) -> pd.DataFrame:
    """逐列比较 DP 与 ND 的特征分布"""
    frame = feature_frame(vectors, labels)
    rows = []
    for column in FEATURE_COLUMNS:
        dp_values = frame.loc[frame["label"] == DP, column].dropna().astype(float)
        nd_values = frame.loc[frame["label"] == ND, column].dropna().astype(float)
        if dp_values.empty or nd_values.empty:
            continue
        u, p = group_difference_test(dp_values.to_numpy(), nd_values.to_numpy())
        rows.append({
            "feature": column,
            "n_dp": int(dp_values.size),
            "n_nd": int(nd_values.size),
            "median_dp": float(dp_values.median()),
            "median_nd": float(nd_values.median()),
            "u_statistic": u,
            "p_value": p,
        })
    return pd.DataFrame(rows, columns=["feature", "n_dp", "n_nd", "median_dp", "median_nd", "u_statistic", "p_value"])


def save_feature_table(vectors: Sequence[FeatureVector], labels: Mapping[str, Optional[str]], path: str) -> int:
    """写出特征 CSV，一行一个用户"""
    frame = feature_frame(vectors, labels)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return len(frame)


def load_feature_table(path: str) -> List[FeatureVector]:
    """读取特征 CSV（save_feature_table 的逆操作）"""
    try:
        frame = pd.read_csv(path, dtype={"user_id": str})
    except (OSError, ValueError) as e:
        raise DataValidationError(f"无法读取特征表 {path}: {e}") from e
    missing = [c for c in ("user_id", "complete", *FEATURE_COLUMNS) if c not in frame.columns]
    if missing:
        raise DataValidationError(f"特征表缺少列: {', '.join(missing)}")

    def value(row: Any, column: str) -> Optional[float]:
        v = row[column]
        return None if pd.isna(v) else float(v)

    vectors = []
    for _, row in frame.iterrows():
        personality = {t: value(row, t) for t in TRAITS}
        has_personality = all(v is not None for v in personality.values())
        ages = [value(row, c) for c in AGE_COLUMNS]
        gender = value(row, "gender")
        vectors.append(FeatureVector(
            user_id=str(row["user_id"]),
            sentiment_pos=float(row["sentiment_pos"]),
            sentiment_neg=float(row["sentiment_neg"]),
            category_rates={c: float(row[col]) for c, col in zip(CORE_CATEGORIES, CATEGORY_COLUMNS)},
            engagement=Engagement(*(float(row[c]) for c in ENGAGEMENT_COLUMNS)),
            personality=personality if has_personality else None,  # type: ignore[arg-type]
            gender=int(gender) if gender is not None else None,
            age_onehot=tuple(int(a) for a in ages) if all(a is not None for a in ages) else None,  # type: ignore[arg-type]
            complete=bool(row["complete"]),
        ))
    return vectors
