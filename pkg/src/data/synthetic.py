"""可复现的合成推文语料生成器（植入抑郁信号词、自述诊断、地区与话题）"""

import os
from dataclasses import dataclass, field, fields
from datetime import date, datetime, time, timedelta, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError
from ..utils.helpers import load_json_file, parse_date, stable_seed
from .corpus import DP, ND, Tweet, UserProfile, UserRecord
from .providers import DEFAULT_PERSONALITY_CALIBRATION, RESOURCES_DIR, TRAITS, beta_parameters


# 填充词的词性比例：功能词、名词、动词、形容词、副词
POS_MIX = (0.45, 0.30, 0.12, 0.09, 0.04)
OWN_TOPIC_RATE = 0.7


@dataclass(frozen=True)
class SynthSpec:
    n_dp: int = 100
    n_nd: int = 100
    tweets_per_user: Tuple[int, int] = (60, 120)
    words_per_tweet: Tuple[int, int] = (8, 20)
    signal_rate_dp: float = 0.08
    signal_rate_nd: float = 0.01
    seed: int = 7
    personality_calibration: Dict[str, Tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_PERSONALITY_CALIBRATION))
    start_date: date = date(2020, 1, 1)
    end_date: date = date(2020, 5, 22)
    plant_self_reports: bool = True
    description_report_rate: float = 0.2
    mention_rate: float = 0.3
    reply_rate: float = 0.2
    states: Tuple[str, ...] = ("NY", "CA", "FL", "TX", "PA")
    state_weights: Tuple[float, ...] = (0.3, 0.3, 0.2, 0.1, 0.1)
    geo_rate: float = 0.9
    step_date: Optional[date] = None
    step_rate_dp: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """检查参数范围，违规时抛出 ConfigError"""
        if self.n_dp < 0 or self.n_nd < 0:
            raise ConfigError("n_dp 与 n_nd 不能为负")
        for name in ("tweets_per_user", "words_per_tweet"):
            low, high = getattr(self, name)
            if low < 1 or high < low:
                raise ConfigError(f"{name} 范围无效: {low}..{high}")
        for name in ("signal_rate_dp", "signal_rate_nd", "description_report_rate", "mention_rate",
                     "reply_rate", "geo_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} 必须位于 [0,1]: {value}")
        if self.step_rate_dp is not None and not 0.0 <= self.step_rate_dp <= 1.0:
            raise ConfigError(f"step_rate_dp 必须位于 [0,1]: {self.step_rate_dp}")
        missing = [t for t in TRAITS if t not in self.personality_calibration]
        if missing:
            raise ConfigError(f"personality_calibration 缺少特质: {', '.join(missing)}")
        for trait in TRAITS:
            beta_parameters(*self.personality_calibration[trait])
        if self.end_date < self.start_date:
            raise ConfigError("end_date 早于 start_date")
        if len(self.states) != len(self.state_weights) or (self.states and sum(self.state_weights) <= 0):
            raise ConfigError("states 与 state_weights 不匹配")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SynthSpec":
        """由配置段构造（忽略未知键）"""
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in data.items() if k in known}
        for key in ("tweets_per_user", "words_per_tweet", "states", "state_weights"):
            if key in values:
                values[key] = tuple(values[key])
        for key in ("start_date", "end_date", "step_date"):
            if key in values:
                values[key] = parse_date(values[key])
        if "personality_calibration" in values:
            values["personality_calibration"] = {k: tuple(v) for k, v in values["personality_calibration"].items()}
        return cls(**values)


@dataclass(frozen=True)
class SynthVocabulary:
    signal: Tuple[str, ...]
    function_words: Tuple[str, ...]
    topic_nouns: Tuple[Tuple[str, ...], ...]
    verbs: Tuple[str, ...]
    adjectives: Tuple[str, ...]
    adverbs: Tuple[str, ...]
    descriptions: Tuple[str, ...]
    self_report_tweets: Tuple[str, ...]
    self_report_descriptions: Tuple[str, ...]

    @classmethod
    def load(cls, resources_dir: str = RESOURCES_DIR) -> "SynthVocabulary":
        signal = load_json_file(os.path.join(resources_dir, "signal_vocab.json"), default=None)
        vocab = load_json_file(os.path.join(resources_dir, "synthetic_vocab.json"), default=None)
        if not signal or not vocab:
            raise ConfigError(f"合成语料词表缺失: {resources_dir}")
        return cls(
            signal=tuple(signal["tokens"]),
            function_words=tuple(vocab["function_words"]),
            topic_nouns=tuple(tuple(words) for _, words in sorted(vocab["topic_nouns"].items())),
            verbs=tuple(vocab["verbs"]),
            adjectives=tuple(vocab["adjectives"]),
            adverbs=tuple(vocab["adverbs"]),
            descriptions=tuple(vocab["descriptions"]),
            self_report_tweets=tuple(vocab["self_report_tweets"]),
            self_report_descriptions=tuple(vocab["self_report_descriptions"]),
        )


def _pick(words: Sequence[str], u: float) -> str:
    return words[min(int(u * len(words)), len(words) - 1)]


def _user_texts(rng: np.random.Generator, n_tweets: int, rates: np.ndarray, spec: SynthSpec,
                vocab: SynthVocabulary, topic: int) -> List[str]:
    """一次性抽取用户全部词槽后再拼装，每个词槽以 rate 概率为信号词"""
    lengths = rng.integers(spec.words_per_tweet[0], spec.words_per_tweet[1] + 1, size=n_tweets)
    total = int(lengths.sum())
    slot_rates = np.repeat(rates, lengths)
    is_signal = rng.random(total) < slot_rates
    signal_u = rng.random(total)
    pos = rng.choice(len(POS_MIX), size=total, p=POS_MIX)
    word_u = rng.random(total)
    own_topic = rng.random(total) < OWN_TOPIC_RATE
    other_topic = rng.integers(0, len(vocab.topic_nouns), size=total)

    pools = (vocab.function_words, None, vocab.verbs, vocab.adjectives, vocab.adverbs)
    words: List[str] = []
    for i in range(total):
        if is_signal[i]:
            words.append(_pick(vocab.signal, signal_u[i]))
        elif pos[i] == 1:
            nouns = vocab.topic_nouns[topic if own_topic[i] else int(other_topic[i])]
            words.append(_pick(nouns, word_u[i]))
        else:
            words.append(_pick(pools[pos[i]], word_u[i]))

    texts = []
    offset = 0
    for length in lengths:
        texts.append(" ".join(words[offset:offset + int(length)]))
        offset += int(length)
    return texts


def _make_user(index: int, user_id: str, label: str, all_ids: Sequence[str], spec: SynthSpec,
               vocab: SynthVocabulary) -> UserRecord:
    rng = np.random.default_rng(stable_seed(spec.seed, "user", user_id))
    n_tweets = int(rng.integers(spec.tweets_per_user[0], spec.tweets_per_user[1] + 1))

    start = datetime.combine(spec.start_date, time(0, 0), tzinfo=timezone.utc)
    span = (spec.end_date - spec.start_date).days * 86400 + 86399
    offsets = np.sort(rng.integers(0, span + 1, size=n_tweets))
    timestamps = [start + timedelta(seconds=int(s)) for s in offsets]

    base_rate = spec.signal_rate_dp if label == DP else spec.signal_rate_nd
    rates = np.full(n_tweets, base_rate)
    if label == DP and spec.step_date is not None and spec.step_rate_dp is not None:
        step = np.array([ts.date() >= spec.step_date for ts in timestamps])
        rates[step] = spec.step_rate_dp

    topic = int(rng.integers(0, len(vocab.topic_nouns)))
    texts = _user_texts(rng, n_tweets, rates, spec, vocab, topic)

    state = None
    if spec.states and rng.random() < spec.geo_rate:
        weights = np.asarray(spec.state_weights, dtype=float)
        state = spec.states[int(rng.choice(len(spec.states), p=weights / weights.sum()))]
    description = _pick(vocab.descriptions, rng.random())

    if label == DP and spec.plant_self_reports:
        if rng.random() < spec.description_report_rate:
            description = _pick(vocab.self_report_descriptions, rng.random())
        else:
            # 最新一条推文替换为自述诊断
            texts[-1] = _pick(vocab.self_report_tweets, rng.random())

    tweets = []
    for j, (ts, text) in enumerate(zip(timestamps, texts)):
        mentions: Tuple[str, ...] = ()
        if len(all_ids) > 1 and rng.random() < spec.mention_rate:
            other = all_ids[int(rng.integers(0, len(all_ids)))]
            if other != user_id:
                mentions = (other,)
                text = f"@user_{other} {text}"
        tweets.append(Tweet(
            tweet_id=f"{user_id}-{j:04d}",
            user_id=user_id,
            timestamp=ts,
            text=text,
            mentioned_user_ids=mentions,
            is_reply=bool(rng.random() < spec.reply_rate),
            state_code=state,
        ))

    profile = UserProfile(
        user_id=user_id,
        screen_name=f"user_{user_id}",
        display_name=f"User {index}",
        description=description,
        location=state or "",
    )
    anchor = tweets[-1].day if label == DP else None
    return UserRecord(profile=profile, tweets=tuple(tweets), label=label, anchor_date=anchor, state_code=state)


def generate_synthetic(spec: SynthSpec, vocabulary: Optional[SynthVocabulary] = None) -> List[UserRecord]:
    """生成合成语料；同一 spec 输出完全相同，用户按 user_id 排序"""
    n_users = spec.n_dp + spec.n_nd
    if n_users == 0:
        return []
    vocab = vocabulary or SynthVocabulary.load()
    overlap = set(vocab.signal) & (set(vocab.function_words) | set(vocab.verbs) | set(vocab.adjectives)
                                   | set(vocab.adverbs) | {w for ws in vocab.topic_nouns for w in ws})
    if overlap:
        raise ConfigError(f"信号词与填充词重叠: {', '.join(sorted(overlap))}")

    labels = np.array([DP] * spec.n_dp + [ND] * spec.n_nd)
    np.random.default_rng(spec.seed).shuffle(labels)
    user_ids = [f"u{i:05d}" for i in range(n_users)]
    return [_make_user(i, uid, str(labels[i]), user_ids, spec, vocab) for i, uid in enumerate(user_ids)]
