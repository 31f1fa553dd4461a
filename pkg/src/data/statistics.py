"""语料统计：标签分布、推文量与日期范围"""

from typing import Dict, Any, List, Sequence

from .corpus import DP, ND, UserRecord


class StatisticsManager:
    """统计管理类，负责汇总语料规模与按日推文量"""

    def __init__(self, users: Sequence[UserRecord] = ()):
        self.users: List[UserRecord] = list(users)

    def get_statistics_summary(self) -> Dict[str, Any]:
        """获取统计概览"""
        tweet_counts = [len(u.tweets) for u in self.users]
        days = [t.day for u in self.users for t in u.tweets]
        return {
            'total_users': len(self.users),
            'dp_users': sum(1 for u in self.users if u.label == DP),
            'nd_users': sum(1 for u in self.users if u.label == ND),
            'unlabeled_users': sum(1 for u in self.users if u.label is None),
            'total_tweets': sum(tweet_counts),
            'average_tweets_per_user': round(sum(tweet_counts) / len(tweet_counts), 2) if tweet_counts else 0,
            'max_tweets_per_user': max(tweet_counts) if tweet_counts else 0,
            'first_date': min(days).isoformat() if days else None,
            'last_date': max(days).isoformat() if days else None,
            'geo_located_users': sum(1 for u in self.users if u.state_code),
        }

    def get_daily_statistics(self) -> Dict[str, Dict[str, int]]:
        """获取每日推文量（按标签拆分）"""
        daily_stats: Dict[str, Dict[str, int]] = {}
        for user in self.users:
            key = user.label or 'unlabeled'
            for tweet in user.tweets:
                day = tweet.day.isoformat()
                stats = daily_stats.setdefault(day, {'tweets': 0})
                stats['tweets'] += 1
                stats[key] = stats.get(key, 0) + 1
        return dict(sorted(daily_stats.items()))


def corpus_summary(users: Sequence[UserRecord]) -> Dict[str, Any]:
    """语料概览：各标签用户数、推文总数与日期范围"""
    return StatisticsManager(users).get_statistics_summary()
