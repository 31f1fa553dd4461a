"""二分类评估指标（阈值 0.5，DP 为正类）"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Sequence

import numpy as np
from scipy import stats
from sklearn.metrics import accuracy_score, f1_score, precision_score, recall_score

from ..data.corpus import DP

THRESHOLD = 0.5


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    f1: float
    auc: float
    precision: float
    recall: float
    threshold: float = THRESHOLD
    n: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def to_binary(labels: Sequence[Any]) -> np.ndarray:
    """标签转换为 0/1（DP 或 1 为正类）"""
    return np.asarray([1 if (label == DP or label == 1 or label is True) else 0 for label in labels], dtype=int)


def rank_auc(labels: Sequence[Any], scores: Sequence[float]) -> float:
    """基于秩统计量的 AUC，并列取中秩；单一类别时返回 0.5"""
    y = to_binary(labels)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return 0.5
    ranks = stats.rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(labels: Sequence[Any], confidences: Sequence[float], threshold: float = THRESHOLD,
                    **metadata: Any) -> MetricsReport:
    """由同一组预测计算 accuracy / F1 / AUC / precision / recall"""
    y = to_binary(labels)
    scores = np.asarray(confidences, dtype=float)
    if y.size == 0:
        return MetricsReport(0.0, 0.0, 0.5, 0.0, 0.0, threshold, 0, dict(metadata))
    predicted = (scores >= threshold).astype(int)
    return MetricsReport(
        accuracy=float(accuracy_score(y, predicted)),
        f1=float(f1_score(y, predicted, zero_division=0)),
        auc=rank_auc(y, scores),
        precision=float(precision_score(y, predicted, zero_division=0)),
        recall=float(recall_score(y, predicted, zero_division=0)),
        threshold=threshold,
        n=int(y.size),
        metadata=dict(metadata),
    )
