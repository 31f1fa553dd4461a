"""语料数据模型与 JSONL 读写、校验"""

import json
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..errors import CorpusFormatError
from ..utils.helpers import format_timestamp, iter_jsonl, parse_date, parse_timestamp, save_jsonl_file

DP = "DP"
ND = "ND"
LABELS = (DP, ND)


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    user_id: str
    timestamp: datetime
    text: str
    mentioned_user_ids: Tuple[str, ...] = ()
    is_reply: bool = False
    state_code: Optional[str] = None

    @property
    def day(self) -> date:
        return self.timestamp.date()


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    screen_name: str = ""
    display_name: str = ""
    description: str = ""
    location: str = ""


@dataclass(frozen=True)
class UserRecord:
    profile: UserProfile
    tweets: Tuple[Tweet, ...] = ()
    label: Optional[str] = None
    anchor_date: Optional[date] = None
    state_code: Optional[str] = None

    @property
    def user_id(self) -> str:
        return self.profile.user_id

    def with_label(self, label: Optional[str], anchor_date: Optional[date] = None,
                   tweets: Optional[Sequence[Tweet]] = None) -> "UserRecord":
        """返回带新标签（及可选的新推文序列）的副本"""
        return replace(self, label=label, anchor_date=anchor_date,
                       tweets=tuple(tweets) if tweets is not None else self.tweets)


@dataclass
class ValidationReport:
    n_users: int = 0
    n_tweets: int = 0
    n_dp: int = 0
    n_nd: int = 0
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_users": self.n_users,
            "n_tweets": self.n_tweets,
            "n_dp": self.n_dp,
            "n_nd": self.n_nd,
            "violations": list(self.violations),
        }


def _tweet_from_dict(raw: Dict[str, Any], user_id: str, state_code: Optional[str]) -> Tweet:
    mentions = raw.get("mentioned_user_ids") or []
    if not isinstance(mentions, list):
        raise ValueError("mentioned_user_ids 必须是列表")
    tweet_id = str(raw["tweet_id"])
    return Tweet(
        tweet_id=tweet_id,
        user_id=user_id,
        timestamp=parse_timestamp(str(raw["timestamp"])),
        text=str(raw.get("text", "")),
        mentioned_user_ids=tuple(str(m) for m in mentions),
        is_reply=bool(raw.get("is_reply", False)),
        state_code=raw.get("state_code") or state_code,
    )


def user_from_dict(raw: Dict[str, Any]) -> UserRecord:
    """由 JSONL 中的一行对象构造 UserRecord（推文按时间升序排列）"""
    user_id = str(raw["user_id"])
    state_code = raw.get("state_code") or None
    profile = UserProfile(
        user_id=user_id,
        screen_name=str(raw.get("screen_name", "")),
        display_name=str(raw.get("display_name", "")),
        description=str(raw.get("description", "") or ""),
        location=str(raw.get("location", "") or ""),
    )
    tweets = [_tweet_from_dict(t, user_id, state_code) for t in raw.get("tweets", [])]
    # 稳定排序：同一时间戳保持文件中的顺序
    tweets.sort(key=lambda t: t.timestamp)
    label = raw.get("label")
    if label not in (None, DP, ND):
        raise ValueError(f"未知标签: {label}")
    return UserRecord(
        profile=profile,
        tweets=tuple(tweets),
        label=label,
        anchor_date=parse_date(raw.get("anchor_date")),
        state_code=state_code,
    )


def user_to_dict(user: UserRecord) -> Dict[str, Any]:
    """UserRecord 转换为 JSONL 对象"""
    return {
        "user_id": user.profile.user_id,
        "screen_name": user.profile.screen_name,
        "display_name": user.profile.display_name,
        "description": user.profile.description,
        "location": user.profile.location,
        "state_code": user.state_code,
        "label": user.label,
        "anchor_date": user.anchor_date.isoformat() if user.anchor_date else None,
        "tweets": [
            {
                "tweet_id": t.tweet_id,
                "timestamp": format_timestamp(t.timestamp),
                "text": t.text,
                "mentioned_user_ids": list(t.mentioned_user_ids),
                "is_reply": t.is_reply,
                **({"state_code": t.state_code} if t.state_code and t.state_code != user.state_code else {}),
            }
            for t in user.tweets
        ],
    }


def load_corpus(path: str) -> List[UserRecord]:
    """加载 JSONL 语料；格式错误时报告行号，tweet_id 重复时报告该 id"""
    users: Dict[str, UserRecord] = {}
    seen_tweets: Dict[str, int] = {}
    for line_number, line in iter_jsonl(path):
        try:
            raw = json.loads(line)
            if not isinstance(raw, dict):
                raise ValueError("每行必须是一个 JSON 对象")
            user = user_from_dict(raw)
        except (ValueError, KeyError, TypeError) as e:
            raise CorpusFormatError(f"第 {line_number} 行格式错误: {e}") from e
        for tweet in user.tweets:
            if tweet.tweet_id in seen_tweets:
                raise CorpusFormatError(
                    f"重复的 tweet_id: {tweet.tweet_id} (第 {seen_tweets[tweet.tweet_id]} 行与第 {line_number} 行)"
                )
            seen_tweets[tweet.tweet_id] = line_number
        if user.user_id in users:
            # 同一用户跨多行时合并推文
            previous = users[user.user_id]
            merged = sorted(previous.tweets + user.tweets, key=lambda t: t.timestamp)
            user = replace(previous, tweets=tuple(merged))
        users[user.user_id] = user
    return list(users.values())


def save_corpus(users: Sequence[UserRecord], path: str) -> int:
    """写出 JSONL 语料，一行一个用户"""
    return save_jsonl_file(path, (user_to_dict(u) for u in users))


def validate_corpus(users: Sequence[UserRecord]) -> ValidationReport:
    """检查语料的全部不变量，违规项作为数据返回"""
    report = ValidationReport(n_users=len(users))
    seen_tweets: Dict[str, str] = {}
    seen_users: Dict[str, int] = {}
    for user in users:
        uid = user.profile.user_id
        if not uid:
            report.violations.append("user_id 为空")
        seen_users[uid] = seen_users.get(uid, 0) + 1
        if user.label == DP:
            report.n_dp += 1
            if user.anchor_date is None:
                report.violations.append(f"DP 用户 {uid} 缺少 anchor_date")
        elif user.label == ND:
            report.n_nd += 1
        elif user.label is not None:
            report.violations.append(f"用户 {uid} 的标签无效: {user.label}")

        previous: Optional[datetime] = None
        for tweet in user.tweets:
            report.n_tweets += 1
            if not tweet.tweet_id:
                report.violations.append(f"用户 {uid} 存在空 tweet_id")
            elif tweet.tweet_id in seen_tweets:
                report.violations.append(f"重复的 tweet_id: {tweet.tweet_id}")
            else:
                seen_tweets[tweet.tweet_id] = uid
            if tweet.user_id != uid:
                report.violations.append(f"推文 {tweet.tweet_id} 的 user_id {tweet.user_id} 与所属用户 {uid} 不一致")
            if previous is not None and tweet.timestamp < previous:
                report.violations.append(f"用户 {uid} 的推文未按时间升序排列 (于 {tweet.tweet_id})")
            previous = tweet.timestamp
    for uid, count in seen_users.items():
        if count > 1:
            report.violations.append(f"重复的 user_id: {uid}")
    return report
