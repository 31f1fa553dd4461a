"""推文文本规范化（特殊标记）与按词数切分的用户文本块"""

import html
import json
import re
from dataclasses import dataclass
from datetime import date
from typing import AbstractSet, Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from ..data.corpus import Tweet, UserRecord
from ..errors import DataValidationError
from ..utils.helpers import iter_jsonl, parse_date, save_jsonl_file

ALLCAPS = "<allcaps>"
ELONGATED = "<elongated>"
REPEATED = "<repeated>"
URL = "<url>"
USER = "<user>"
HASHTAG = "<hashtag>"
NUMBER = "<number>"
SPECIAL_TOKENS = frozenset({ALLCAPS, ELONGATED, REPEATED, URL, USER, HASHTAG, NUMBER})

# 顺序即优先级
_TOKEN_RE = re.compile(
    r"""
    (?P<special><(?:allcaps|elongated|repeated|url|user|hashtag|number)>)
    |(?P<url>https?://\S+|www\.\S+)
    |(?P<user>@\w+)
    |(?P<hashtag>\#\w+)
    |(?P<number>[-+]?\d+(?:[.,:]\d+)*(?!\w))
    |(?P<word>\w+(?:['’]\w+)*)
    |(?P<punct>[!?.]+)
    |(?P<other>\S)
    """,
    re.VERBOSE,
)
_ELONGATION_RE = re.compile(r"([^\W\d_])\1{2,}")


@dataclass(frozen=True)
class NormalizedText:
    tokens: Tuple[str, ...] = ()

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> List[str]:
        return [t for t in self.tokens if is_word(t)]

    @property
    def word_count(self) -> int:
        return sum(1 for t in self.tokens if is_word(t))

    def text(self) -> str:
        return " ".join(self.tokens)


def is_word(token: str) -> bool:
    """单词标记：非特殊标记且含字母或数字（标点不计）"""
    return token not in SPECIAL_TOKENS and any(ch.isalnum() for ch in token)


def _collapse_elongation(word: str, known_words: Optional[AbstractSet[str]]) -> Tuple[str, bool]:
    if not _ELONGATION_RE.search(word):
        return word, False
    single = _ELONGATION_RE.sub(r"\1", word)
    if known_words:
        double = _ELONGATION_RE.sub(r"\1\1", word)
        if double in known_words and single not in known_words:
            return double, True
    return single, True


def normalize(text: str, known_words: Optional[AbstractSet[str]] = None) -> NormalizedText:
    """规范化推文文本：小写化并插入 <allcaps>/<elongated>/<repeated> 等特殊标记"""
    if not text:
        return NormalizedText()
    text = html.unescape(text).replace("’", "'")

    out: List[str] = []
    previous_word: Optional[str] = None
    repeat_marked = False
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        raw = match.group(0)
        if kind == "word":
            word = raw.lower()
            allcaps = len(raw) >= 2 and raw.isupper()
            word, elongated = _collapse_elongation(word, known_words)
            if word == previous_word:
                # 连续重复的词只保留一次，标记一次 <repeated>
                if not repeat_marked:
                    out.append(REPEATED)
                    repeat_marked = True
                continue
            out.append(word)
            if allcaps:
                out.append(ALLCAPS)
            if elongated:
                out.append(ELONGATED)
            previous_word = word
            repeat_marked = False
            continue

        previous_word = None
        repeat_marked = False
        if kind == "special":
            out.append(raw)
        elif kind == "url":
            out.append(URL)
        elif kind == "user":
            out.append(USER)
        elif kind == "hashtag":
            out.extend((HASHTAG, raw[1:].lower()))
        elif kind == "number":
            out.append(NUMBER)
        elif kind == "punct":
            out.append(raw[0])
            if len(raw) >= 2:
                out.append(ELONGATED)
        else:
            out.append(raw)
    return NormalizedText(tuple(out))


@dataclass(frozen=True)
class Chunk:
    user_id: str
    label: Optional[str]
    tokens: Tuple[str, ...]
    word_count: int
    mid_date: Optional[date]
    source_tweet_ids: Tuple[str, ...]
    chunk_index: int = 0
    is_partial: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "user_id": self.user_id,
            "label": self.label,
            "chunk_index": self.chunk_index,
            "tokens": list(self.tokens),
            "word_count": self.word_count,
            "mid_date": self.mid_date.isoformat() if self.mid_date else None,
            "source_tweet_ids": list(self.source_tweet_ids),
            "is_partial": self.is_partial,
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "Chunk":
        return cls(
            user_id=str(raw["user_id"]),
            label=raw.get("label"),
            tokens=tuple(raw["tokens"]),
            word_count=int(raw["word_count"]),
            mid_date=parse_date(raw.get("mid_date")),
            source_tweet_ids=tuple(str(t) for t in raw.get("source_tweet_ids", [])),
            chunk_index=int(raw.get("chunk_index", 0)),
            is_partial=bool(raw.get("is_partial", False)),
        )


def _accumulate(tweets: Sequence[Tweet], target_words: int,
                known_words: Optional[AbstractSet[str]]) -> Iterator[Tuple[List[Tweet], List[str], int]]:
    """按时间顺序累积整条推文，词数达到 target_words 即闭合；最后一组可能不足"""
    group: List[Tweet] = []
    tokens: List[str] = []
    words = 0
    for tweet in tweets:
        normalized = normalize(tweet.text, known_words)
        group.append(tweet)
        tokens.extend(normalized.tokens)
        words += normalized.word_count
        if words >= target_words:
            yield group, tokens, words
            group, tokens, words = [], [], 0
    if group:
        yield group, tokens, words


def _make_chunk(user: UserRecord, index: int, group: List[Tweet], tokens: List[str], words: int,
                is_partial: bool = False) -> Chunk:
    return Chunk(
        user_id=user.user_id,
        label=user.label,
        tokens=tuple(tokens),
        word_count=words,
        mid_date=group[len(group) // 2].day,
        source_tweet_ids=tuple(t.tweet_id for t in group),
        chunk_index=index,
        is_partial=is_partial,
    )


def chunk_user(user: UserRecord, target_words: int = 250, min_words: int = 125,
               known_words: Optional[AbstractSet[str]] = None) -> List[Chunk]:
    """训练用切块：不足 min_words 的尾块丢弃"""
    if target_words < 1 or min_words < 1:
        raise ValueError("target_words 与 min_words 必须为正")
    chunks: List[Chunk] = []
    for group, tokens, words in _accumulate(user.tweets, target_words, known_words):
        if words < min_words:
            continue
        chunks.append(_make_chunk(user, len(chunks), group, tokens, words))
    return chunks


def chunk_stream_for_trend(user: UserRecord, start_date: date, target_words: int = 250,
                           min_words: int = 125, end_date: Optional[date] = None,
                           known_words: Optional[AbstractSet[str]] = None) -> List[Chunk]:
    """趋势用切块：从 start_date 起累积，尾块保留并标记 is_partial，mid_date 取中间推文日期"""
    if target_words < 1:
        raise ValueError("target_words 必须为正")
    tweets = [t for t in user.tweets if t.day >= start_date and (end_date is None or t.day <= end_date)]
    chunks: List[Chunk] = []
    for group, tokens, words in _accumulate(tweets, target_words, known_words):
        if words == 0:
            continue
        chunks.append(_make_chunk(user, len(chunks), group, tokens, words, is_partial=words < min_words))
    return chunks


def user_word_count(user: UserRecord, known_words: Optional[AbstractSet[str]] = None) -> int:
    """用户全部推文规范化后的单词总数"""
    return sum(normalize(t.text, known_words).word_count for t in user.tweets)


def chunk_corpus(users: Iterable[UserRecord], target_words: int = 250, min_words: int = 125,
                 known_words: Optional[AbstractSet[str]] = None) -> List[Chunk]:
    chunks: List[Chunk] = []
    for user in users:
        chunks.extend(chunk_user(user, target_words, min_words, known_words))
    return chunks


def save_chunks(chunks: Iterable[Chunk], path: str) -> int:
    """写出文本块 JSONL"""
    return save_jsonl_file(path, (c.to_dict() for c in chunks))


def load_chunks(path: str) -> List[Chunk]:
    """读取文本块 JSONL"""
    chunks = []
    for line_number, line in iter_jsonl(path):
        try:
            chunks.append(Chunk.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as e:
            raise DataValidationError(f"文本块文件 {path} 第 {line_number} 行格式错误: {e}") from e
    return chunks
