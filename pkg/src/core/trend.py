"""按日期分箱的截尾均值趋势序列（分组 / 分地区）与居中滑动平均"""

import math
import os
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set

import numpy as np
import pandas as pd
from scipy import stats

from ..data.corpus import UserRecord
from ..errors import ConfigError
from ..utils.logging_manager import get_logging_manager
from .scorer import ChunkScore

GLOBAL = "global"
PER_BIN = "bin"
TRIM_SCOPES = (GLOBAL, PER_BIN)
ALL_STATES = "ALL"


@dataclass(frozen=True)
class DatedScore:
    user_id: str
    date: date
    confidence: float
    group_keys: Mapping[str, str] = field(default_factory=dict)


@dataclass
class TrendSeries:
    bin_start_dates: List[date]
    raw_means: List[float]
    smoothed: List[float]
    bin_counts: List[int]
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "bin_start": [d.isoformat() for d in self.bin_start_dates],
            "raw_mean": self.raw_means,
            "smoothed": self.smoothed,
            "count": self.bin_counts,
        }, columns=["bin_start", "raw_mean", "smoothed", "count"])


@dataclass
class GeoTrendResult:
    series: Dict[str, TrendSeries]
    all_series: Optional[TrendSeries]
    excluded: Dict[str, int]
    user_counts: Dict[str, int]


def _check_bin_days(bin_days: int) -> None:
    if bin_days < 1:
        raise ConfigError(f"bin_days 必须 ≥ 1: {bin_days}")


def _check_trim(trim_fraction: float) -> None:
    if not 0.0 <= trim_fraction < 0.5:
        raise ConfigError(f"trim_fraction 必须位于 [0, 0.5): {trim_fraction}")


def n_bins(start: date, end: date, bin_days: int) -> int:
    """覆盖 [start, end] 所需的箱数"""
    _check_bin_days(bin_days)
    if end < start:
        raise ConfigError(f"结束日期 {end} 早于开始日期 {start}")
    return math.ceil(((end - start).days + 1) / bin_days)


def assign_bins(scores: Sequence[DatedScore], start: date, bin_days: int = 3) -> Dict[int, List[DatedScore]]:
    """箱序号 = floor((date - start) / bin_days)；早于 start 的分数被拒绝并计数"""
    _check_bin_days(bin_days)
    bins: Dict[int, List[DatedScore]] = {}
    rejected = 0
    for score in scores:
        offset = (score.date - start).days
        if offset < 0:
            rejected += 1
            continue
        bins.setdefault(offset // bin_days, []).append(score)
    if rejected:
        get_logging_manager().log_warning("早于起始日期的分数已丢弃", rejected=rejected, start=start.isoformat())
    return dict(sorted(bins.items()))


def trimmed_collection(scores: Sequence[float], trim_fraction: float = 0.10) -> List[float]:
    """升序排列后两端各去掉 floor(trim_fraction·n) 个值"""
    _check_trim(trim_fraction)
    if len(scores) == 0:
        return []
    return np.sort(stats.trimboth(np.asarray(scores, dtype=float), trim_fraction)).tolist()


def trim_dated(scores: Sequence[DatedScore], trim_fraction: float = 0.10) -> List[DatedScore]:
    """对带日期的分数按置信度截尾（并列时按输入顺序稳定排序）"""
    _check_trim(trim_fraction)
    n = len(scores)
    cut = int(math.floor(trim_fraction * n))
    if cut == 0:
        return list(scores)
    order = np.argsort(np.asarray([s.confidence for s in scores]), kind="stable")
    kept = sorted(order[cut:n - cut].tolist())
    return [scores[i] for i in kept]


def moving_average(series: Sequence[float], window: int = 5) -> List[float]:
    """居中滑动平均；边缘处窗口对称收缩到可用半径"""
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"滑动窗口必须为正奇数: {window}")
    values = np.asarray(series, dtype=float)
    half = window // 2
    n = values.size
    smoothed = []
    for i in range(n):
        radius = min(half, i, n - 1 - i)
        smoothed.append(float(values[i - radius:i + radius + 1].mean()))
    return smoothed


def fill_empty_bins(means: Sequence[Optional[float]]) -> List[float]:
    """空箱沿用前一箱的原始均值；开头的空箱取第一个观测值"""
    first = next((m for m in means if m is not None), None)
    if first is None:
        return []
    filled = []
    previous = first
    for mean in means:
        if mean is not None:
            previous = mean
        filled.append(previous)
    return filled


def build_series(scores: Sequence[DatedScore], start: date, end: date, bin_days: int = 3,
                 trim_fraction: float = 0.10, window: int = 5, trim_scope: str = GLOBAL) -> Optional[TrendSeries]:
    """截尾 → 分箱 → 箱内均值 → 滑动平均；没有任何分数时返回 None"""
    if trim_scope not in TRIM_SCOPES:
        raise ConfigError(f"未知截尾范围: {trim_scope}")
    total_bins = n_bins(start, end, bin_days)
    in_range = [s for s in scores if s.date <= end]
    if len(in_range) < len(scores):
        get_logging_manager().log_warning("晚于结束日期的分数已丢弃", dropped=len(scores) - len(in_range),
                                          end=end.isoformat())
    early = sum(1 for s in in_range if s.date < start)
    if early:
        get_logging_manager().log_warning("早于起始日期的分数已丢弃", rejected=early, start=start.isoformat())
        in_range = [s for s in in_range if s.date >= start]
    if trim_scope == GLOBAL:
        in_range = trim_dated(in_range, trim_fraction)
    bins = assign_bins(in_range, start, bin_days)

    means: List[Optional[float]] = [None] * total_bins
    counts = [0] * total_bins
    for index, members in bins.items():
        values = [s.confidence for s in members]
        if trim_scope == PER_BIN:
            values = trimmed_collection(values, trim_fraction)
        if values:
            means[index] = float(np.mean(values))
            counts[index] = len(values)
    raw_means = fill_empty_bins(means)
    if not raw_means:
        return None
    return TrendSeries(
        bin_start_dates=[start + timedelta(days=i * bin_days) for i in range(total_bins)],
        raw_means=raw_means,
        smoothed=moving_average(raw_means, window),
        bin_counts=counts,
        metadata={"bin_days": bin_days, "trim_fraction": trim_fraction, "trim_scope": trim_scope,
                  "window": window, "start": start.isoformat(), "end": end.isoformat(),
                  "n_scores": sum(counts)},
    )


def user_group_keys(user: UserRecord) -> Dict[str, str]:
    keys = {}
    if user.label:
        keys["cohort"] = user.label
    if user.state_code:
        keys["state"] = user.state_code
    return keys


def scores_to_dated(chunk_scores: Sequence[ChunkScore], users: Sequence[UserRecord]) -> List[DatedScore]:
    """为带 mid_date 的文本块分数附加 cohort / state 分组键"""
    keys = {u.user_id: user_group_keys(u) for u in users}
    dated = []
    skipped = 0
    for score in chunk_scores:
        if score.mid_date is None or score.user_id not in keys:
            skipped += 1
            continue
        dated.append(DatedScore(score.user_id, score.mid_date, score.confidence, keys[score.user_id]))
    if skipped:
        get_logging_manager().log_warning("缺少日期或用户信息的分数未参与趋势计算", skipped=skipped)
    return dated


def group_trend(users: Optional[Sequence[UserRecord]], scores: Sequence[DatedScore], group_key: str, start: date,
                end: date, bin_days: int = 3, trim_fraction: float = 0.10, window: int = 5,
                trim_scope: str = GLOBAL) -> Dict[str, TrendSeries]:
    """按分组键计算趋势；没有分数的分组不出现在结果中"""
    if users is not None:
        user_keys = {u.user_id: user_group_keys(u) for u in users}
        scores = [s if group_key in s.group_keys else
                  DatedScore(s.user_id, s.date, s.confidence, {**user_keys.get(s.user_id, {}), **s.group_keys})
                  for s in scores]
    if scores and not any(group_key in s.group_keys for s in scores):
        raise ConfigError(f"未知分组键: {group_key}")

    grouped: Dict[str, List[DatedScore]] = {}
    for score in scores:
        value = score.group_keys.get(group_key)
        if value is not None:
            grouped.setdefault(value, []).append(score)
    result = {}
    for value in sorted(grouped):
        series = build_series(grouped[value], start, end, bin_days, trim_fraction, window, trim_scope)
        if series is not None:
            series.metadata["group"] = f"{group_key}={value}"
            result[value] = series
    return result


def geo_trend(users: Optional[Sequence[UserRecord]], scores: Sequence[DatedScore], states: Set[str],
              start: date, end: date, min_users: int = 550, bin_days: int = 3, trim_fraction: float = 0.10,
              window: int = 5, trim_scope: str = GLOBAL) -> GeoTrendResult:
    """分州趋势：用户数不足 min_users 的州被排除并记录；ALL 汇总所有带地区的用户"""
    if users is not None:
        counts: Dict[str, int] = {}
        for user in users:
            if user.state_code:
                counts[user.state_code] = counts.get(user.state_code, 0) + 1
    else:
        seen: Dict[str, Set[str]] = {}
        for score in scores:
            state = score.group_keys.get("state")
            if state:
                seen.setdefault(state, set()).add(score.user_id)
        counts = {state: len(ids) for state, ids in seen.items()}

    logger = get_logging_manager()
    kept_states = set()
    excluded = {}
    for state in sorted(states):
        n_users = counts.get(state, 0)
        if n_users < min_users:
            excluded[state] = n_users
            logger.log_warning("州用户数不足，已排除", state=state, users=n_users, min_users=min_users)
        else:
            kept_states.add(state)

    if users is not None:
        user_keys = {u.user_id: user_group_keys(u) for u in users}
        scores = [DatedScore(s.user_id, s.date, s.confidence, {**user_keys.get(s.user_id, {}), **s.group_keys})
                  for s in scores]
    has_state = any("state" in s.group_keys for s in scores)
    by_state = group_trend(None, scores, "state", start, end, bin_days, trim_fraction, window,
                           trim_scope) if has_state else {}
    series = {s: by_state[s] for s in sorted(kept_states) if s in by_state}
    geo_scores = [s for s in scores if s.group_keys.get("state")]
    if users is not None:
        located = {u.user_id for u in users if u.state_code}
        geo_scores = [s for s in scores if s.user_id in located]
    all_series = build_series(geo_scores, start, end, bin_days, trim_fraction, window, trim_scope)
    if all_series is not None:
        all_series.metadata["group"] = f"state={ALL_STATES}"
    return GeoTrendResult(series=series, all_series=all_series, excluded=excluded, user_counts=dict(sorted(counts.items())))


def series_csv(series: TrendSeries) -> str:
    """bin_start,raw_mean,smoothed,count CSV 文本"""
    return series.to_frame().to_csv(index=False, lineterminator="\n")


def save_series(series: TrendSeries, path: str) -> int:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(series_csv(series))
    return len(series.bin_start_dates)
