"""基于自述诊断短语的抑郁队列识别与对照组抽样"""

import os
import re
from dataclasses import dataclass
from datetime import date, timedelta
from functools import cached_property
from typing import Dict, List, Optional, Pattern, Sequence, Set

import numpy as np

from ..data.corpus import DP, ND, Tweet, UserRecord
from ..data.providers import RESOURCES_DIR
from ..errors import CohortError, PatternError
from ..utils.helpers import load_json_file
from ..utils.logging_manager import get_logging_manager

TWEET = "TWEET"
DESCRIPTION = "DESCRIPTION"
NONE = "NONE"

REQUIRED_FALSE_POSITIVES = ("economic depression", "great depression")

# 对照组排除使用的裸关键词
_BARE_KEYWORD = re.compile(r"depression", re.IGNORECASE)
_REDACTION_CHAR = "\x00"


@dataclass(frozen=True)
class PatternSet:
    tweet_templates: tuple
    description_templates: tuple
    descriptor_words: tuple
    exclusion_description_terms: tuple
    false_positive_phrases: tuple

    @classmethod
    def from_dict(cls, data: Dict[str, Sequence[str]]) -> "PatternSet":
        try:
            patterns = cls(**{name: tuple(str(v) for v in data[name]) for name in (
                "tweet_templates", "description_templates", "descriptor_words",
                "exclusion_description_terms", "false_positive_phrases")})
        except KeyError as e:
            raise PatternError(f"模式文件缺少字段: {e.args[0]}") from e
        patterns.validate()
        return patterns

    def validate(self) -> None:
        """检查模板可编译且包含必需的误报短语"""
        lowered = {p.lower() for p in self.false_positive_phrases}
        missing = [p for p in REQUIRED_FALSE_POSITIVES if p not in lowered]
        if missing:
            raise PatternError(f"false_positive_phrases 缺少必需短语: {', '.join(missing)}")
        # 触发编译
        self.tweet_regex
        self.description_regex
        self.template_regex

    def _descriptor_group(self) -> str:
        words = sorted({w.strip().lower() for w in self.descriptor_words if w.strip()}, key=len, reverse=True)
        if not words:
            return ""
        alternatives = "|".join(re.escape(w).replace(r"\ ", r"\s+") for w in words)
        return rf"(?:(?:{alternatives})\s+)?"

    def _compile(self, templates: Sequence[str]) -> Pattern[str]:
        descriptor = self._descriptor_group()
        parts = []
        for template in templates:
            body = descriptor.join(piece.replace(" ", r"\s+") for piece in template.split("{X}"))
            try:
                re.compile(body, re.IGNORECASE)
            except re.error as e:
                raise PatternError(f"模板无法编译: {template!r}: {e}") from e
            parts.append(f"(?:{body})")
        if not parts:
            # 空模板集永不匹配
            return re.compile(r"(?!x)x")
        return re.compile(r"(?<!\w)(?:" + "|".join(parts) + r")(?!\w)", re.IGNORECASE)

    @cached_property
    def tweet_regex(self) -> Pattern[str]:
        return self._compile(self.tweet_templates)

    @cached_property
    def description_regex(self) -> Pattern[str]:
        return self._compile(self.description_templates)

    @cached_property
    def template_regex(self) -> Pattern[str]:
        """推文与简介模板的并集，用于对照组排除"""
        return self._compile(tuple(dict.fromkeys(self.tweet_templates + self.description_templates)))

    @cached_property
    def false_positive_regex(self) -> Optional[Pattern[str]]:
        phrases = sorted({p.strip() for p in self.false_positive_phrases if p.strip()}, key=len, reverse=True)
        if not phrases:
            return None
        body = "|".join(re.escape(p).replace(r"\ ", r"\s+") for p in phrases)
        return re.compile(rf"(?<!\w)(?:{body})(?!\w)", re.IGNORECASE)


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    source: str = NONE
    matched_text: Optional[str] = None
    matched_tweet_id: Optional[str] = None
    matched_date: Optional[date] = None


NO_MATCH = MatchResult(matched=False)


def load_patterns(path: Optional[str] = None) -> PatternSet:
    """从 JSON 文件加载 PatternSet（默认使用内置模式文件）"""
    path = path or os.path.join(RESOURCES_DIR, "patterns.json")
    data = load_json_file(path, default=None)
    if not isinstance(data, dict):
        raise PatternError(f"模式文件不存在或格式无效: {path}")
    return PatternSet.from_dict(data)


def redact_false_positives(text: str, patterns: PatternSet) -> str:
    """把误报短语所在区间替换为等长的非单词字符，保持其余位置不变"""
    text = text.replace("’", "'")
    regex = patterns.false_positive_regex
    if regex is None:
        return text
    return regex.sub(lambda m: _REDACTION_CHAR * len(m.group(0)), text)


def match_depression_signal(text: str, patterns: PatternSet, context: str = TWEET) -> MatchResult:
    """判断文本是否包含自述抑郁诊断短语；返回阅读顺序中的第一个匹配"""
    if context not in (TWEET, DESCRIPTION):
        raise ValueError(f"未知上下文: {context}")
    if not text:
        return NO_MATCH
    regex = patterns.tweet_regex if context == TWEET else patterns.description_regex
    match = regex.search(redact_false_positives(text, patterns))
    if match is None:
        return NO_MATCH
    return MatchResult(matched=True, source=context, matched_text=text[match.start():match.end()])


def has_exclusion_term(description: str, patterns: PatternSet) -> bool:
    """简介中是否含有从业者排除词"""
    lowered = description.lower()
    return any(term.lower() in lowered for term in patterns.exclusion_description_terms if term)


def _find_anchor_tweet(user: UserRecord, patterns: PatternSet) -> MatchResult:
    # 推文按时间升序，取最早的自述
    for tweet in user.tweets:
        result = match_depression_signal(tweet.text, patterns, TWEET)
        if result.matched:
            return MatchResult(matched=True, source=TWEET, matched_text=result.matched_text,
                               matched_tweet_id=tweet.tweet_id, matched_date=tweet.day)
    return NO_MATCH


def window_history(tweets: Sequence[Tweet], anchor_date: date, window_days: int, tweet_cap: int,
                   patterns: Optional[PatternSet] = None) -> List[Tweet]:
    """截取 [anchor - window_days, anchor] 内的推文，可选去除诊断推文，保留最新的 tweet_cap 条"""
    start = anchor_date - timedelta(days=window_days)
    kept = [t for t in tweets if start <= t.day <= anchor_date]
    if patterns is not None:
        kept = [t for t in kept if not match_depression_signal(t.text, patterns, TWEET).matched]
    if tweet_cap >= 0 and len(kept) > tweet_cap:
        kept = kept[len(kept) - tweet_cap:]
    return kept


def build_dp_cohort(users: Sequence[UserRecord], patterns: PatternSet, window_days: int = 90,
                    tweet_cap: int = 200, reference_date: Optional[date] = None,
                    strip_diagnosis_tweets: bool = True) -> List[UserRecord]:
    """识别 DP 用户并截取其历史推文窗口；输出按 user_id 排序"""
    logger = get_logging_manager()
    if reference_date is None:
        days = [t.day for u in users for t in u.tweets]
        reference_date = max(days) if days else None

    cohort: List[UserRecord] = []
    excluded = 0
    by_source = {TWEET: 0, DESCRIPTION: 0}
    for user in sorted(users, key=lambda u: u.user_id):
        result = _find_anchor_tweet(user, patterns)
        if not result.matched:
            result = match_depression_signal(user.profile.description, patterns, DESCRIPTION)
        if not result.matched:
            continue
        if has_exclusion_term(user.profile.description, patterns):
            excluded += 1
            continue

        anchor = result.matched_date if result.source == TWEET else reference_date
        if anchor is None:
            logger.log_warning("简介匹配的用户缺少参考日期，已跳过", user_id=user.user_id)
            continue
        history = window_history(user.tweets, anchor, window_days, tweet_cap,
                                 patterns if strip_diagnosis_tweets else None)
        cohort.append(user.with_label(DP, anchor_date=anchor, tweets=history))
        by_source[result.source] += 1

    logger.log_activity("DP 队列构建完成", n_dp=len(cohort), from_tweets=by_source[TWEET],
                        from_descriptions=by_source[DESCRIPTION], excluded_practitioners=excluded)
    return cohort


def mentions_depression(user: UserRecord, patterns: PatternSet, tweet_cap: int = 200) -> bool:
    """最新 tweet_cap 条推文或简介中是否出现抑郁相关词"""
    recent = user.tweets[-tweet_cap:] if tweet_cap > 0 else ()
    texts = [user.profile.description] + [t.text for t in recent]
    for text in texts:
        if not text:
            continue
        if _BARE_KEYWORD.search(text) or patterns.template_regex.search(redact_false_positives(text, patterns)):
            return True
    return False


def sample_control(users: Sequence[UserRecord], dp_ids: Set[str], n: int, patterns: PatternSet,
                   seed: int, tweet_cap: int = 200) -> List[UserRecord]:
    """从干净候选池中均匀抽取 n 个 ND 用户（固定种子可复现，输出按 user_id 排序）"""
    if n < 0:
        raise CohortError(f"对照组规模不能为负: {n}")
    pool = [
        u for u in sorted(users, key=lambda u: u.user_id)
        if u.user_id not in dp_ids
        and not has_exclusion_term(u.profile.description, patterns)
        and not mentions_depression(u, patterns, tweet_cap)
    ]
    if len(pool) < n:
        raise CohortError(f"对照候选池不足: 需要 {n} 个用户，仅能提供 {len(pool)} 个")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(pool), size=n, replace=False).tolist()) if n else []
    control = []
    for index in chosen:
        user = pool[index]
        history = user.tweets[-tweet_cap:] if tweet_cap > 0 else user.tweets[:0]
        control.append(user.with_label(ND, anchor_date=None, tweets=history))
    get_logging_manager().log_activity("ND 对照组抽样完成", n_nd=len(control), pool_size=len(pool), seed=seed)
    return control
