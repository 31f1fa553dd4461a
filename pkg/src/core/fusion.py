"""融合分类：用户平均置信度 + 五类特征，经典分类器训练、评估与置换重要性"""

import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.ensemble import RandomForestClassifier
from sklearn.inspection import permutation_importance as sklearn_permutation_importance
from sklearn.linear_model import LogisticRegression, SGDClassifier
from sklearn.model_selection import train_test_split
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC

from ..errors import ConfigError, DataValidationError, ModelError
from ..utils.helpers import save_json_file
from ..utils.logging_manager import get_logging_manager
from .features import FEATURE_GROUP_COLUMNS, FeatureVector
from .metrics import THRESHOLD, MetricsReport, compute_metrics, to_binary
from .scorer import UserScore

SVM = "SVM"
LOGREG = "LOGREG"
RANDOM_FOREST = "RANDOM_FOREST"
ALGORITHMS = (SVM, LOGREG, RANDOM_FOREST)
ALGORITHM_ALIASES = {"svm": SVM, "logreg": LOGREG, "lr": LOGREG, "rf": RANDOM_FOREST, "random_forest": RANDOM_FOREST}

SCORE_GROUP = "XLNET_SCORE"
FEATURE_GROUPS = ("V", "D", "E", "P", "L", SCORE_GROUP)
GROUP_ALIASES = {"SCORE": SCORE_GROUP}
SCORE_COLUMN = "mean_confidence"


def parse_groups(groups: Any) -> Tuple[str, ...]:
    """解析 "V,D,E" 或序列形式的特征组，按固定顺序返回"""
    if isinstance(groups, str):
        groups = [g for g in groups.split(",") if g.strip()]
    names = {GROUP_ALIASES.get(str(g).strip().upper(), str(g).strip().upper()) for g in groups}
    unknown = sorted(names - set(FEATURE_GROUPS))
    if unknown:
        raise ConfigError(f"未知特征组: {', '.join(unknown)}")
    if not names:
        raise ConfigError("至少需要选择一个特征组")
    return tuple(g for g in FEATURE_GROUPS if g in names)


def parse_algorithm(name: str) -> str:
    algorithm = ALGORITHM_ALIASES.get(str(name).lower(), str(name).upper())
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"未知融合算法: {name}")
    return algorithm


@dataclass
class FusionDataset:
    user_ids: List[str]
    X: np.ndarray
    y: np.ndarray
    column_names: Tuple[str, ...]
    groups: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.user_ids)

    def subset(self, user_ids: Sequence[str]) -> "FusionDataset":
        """按用户子集切分（保持列定义）"""
        wanted = set(user_ids)
        mask = np.array([u in wanted for u in self.user_ids], dtype=bool)
        return FusionDataset([u for u, m in zip(self.user_ids, mask) if m], self.X[mask], self.y[mask],
                             self.column_names, dict(self.groups))


def build_fusion_dataset(user_scores: Sequence[UserScore], feature_vectors: Sequence[FeatureVector],
                         labels: Mapping[str, Optional[str]], groups: Any) -> FusionDataset:
    """只保留特征完整、带标签且有用户分数的用户；列限制为所选特征组"""
    selected = parse_groups(groups)
    scores = {s.user_id: s.mean_confidence for s in user_scores}
    vectors = {v.user_id: v for v in feature_vectors if v.complete}
    user_ids = sorted(u for u in vectors if u in scores and labels.get(u) is not None)
    if not user_ids:
        raise DataValidationError("用户分数、完整特征与标签三者没有共同用户")

    group_columns: Dict[str, Tuple[str, ...]] = OrderedDict()
    for group in selected:
        group_columns[group] = (SCORE_COLUMN,) if group == SCORE_GROUP else FEATURE_GROUP_COLUMNS[group]
    columns = tuple(c for cols in group_columns.values() for c in cols)

    rows = []
    for user_id in user_ids:
        row = vectors[user_id].to_row()
        row[SCORE_COLUMN] = scores[user_id]
        rows.append([float(row[c]) for c in columns])
    dropped = len(feature_vectors) - len(vectors)
    if dropped:
        get_logging_manager().log_warning("特征不完整的用户已从融合数据集中剔除", dropped=dropped)
    return FusionDataset(user_ids, np.asarray(rows, dtype=float), to_binary([labels[u] for u in user_ids]),
                         columns, dict(group_columns))


class PlattMarginClassifier(ClassifierMixin, BaseEstimator):
    """软间隔 SVM，置信度为 sigmoid(A·margin)，A>0 在 10% 留出集的间隔上拟合"""

    def __init__(self, kernel: str = "linear", seed: int = 0, validation_fraction: float = 0.1):
        self.kernel = kernel
        self.seed = seed
        self.validation_fraction = validation_fraction

    def _base(self):
        if self.kernel == "linear":
            return SGDClassifier(loss="hinge", penalty="l2", learning_rate="adaptive", eta0=0.1,
                                 max_iter=1000, tol=1e-3, random_state=self.seed)
        if self.kernel == "rbf":
            return SVC(kernel="rbf", gamma="scale", random_state=self.seed)
        raise ConfigError(f"未知 SVM 核函数: {self.kernel}")

    @staticmethod
    def _fit_scale(margins: np.ndarray, y: np.ndarray) -> Optional[float]:
        if np.unique(y).size < 2 or np.allclose(margins, 0.0):
            return None
        calibrator = LogisticRegression(fit_intercept=False, C=1e4)
        calibrator.fit(margins.reshape(-1, 1), y)
        scale = float(calibrator.coef_[0, 0])
        return scale if scale > 0 else None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.classes_ = np.array([0, 1])
        scale = None
        n_val = int(round(len(y) * self.validation_fraction))
        if n_val >= 2 and len(y) - n_val >= 2:
            try:
                train_idx, val_idx = train_test_split(np.arange(len(y)), test_size=n_val,
                                                      random_state=self.seed, stratify=y)
            except ValueError:
                train_idx, val_idx = None, None
            if train_idx is not None and np.unique(y[train_idx]).size == 2:
                holdout = clone(self._base()).fit(X[train_idx], y[train_idx])
                scale = self._fit_scale(holdout.decision_function(X[val_idx]), y[val_idx])
        self.estimator_ = clone(self._base()).fit(X, y)
        if scale is None:
            # 留出集缺少某一类别时退回训练集间隔
            scale = self._fit_scale(self.estimator_.decision_function(X), y)
        self.scale_ = scale if scale is not None else 1.0
        return self

    def decision_function(self, X):
        return self.estimator_.decision_function(np.asarray(X, dtype=float))

    def predict_proba(self, X):
        p = expit(self.scale_ * self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= THRESHOLD).astype(int)


@dataclass
class FusionModel:
    algorithm: str
    estimator: Pipeline
    column_names: Tuple[str, ...]
    seed: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def _check(self, data: FusionDataset) -> None:
        if tuple(data.column_names) != tuple(self.column_names):
            raise ModelError("数据集列与模型训练列不一致")

    def predict_proba(self, data: FusionDataset) -> np.ndarray:
        """DP 置信度"""
        self._check(data)
        if len(data) == 0:
            return np.zeros(0)
        return self.estimator.predict_proba(data.X)[:, 1]


def _make_classifier(algorithm: str, seed: int, svm_kernel: str, n_trees: int, jobs: int):
    if algorithm == LOGREG:
        return SGDClassifier(loss="log_loss", penalty="l2", learning_rate="adaptive", eta0=0.1,
                             max_iter=1000, tol=1e-3, random_state=seed)
    if algorithm == SVM:
        return PlattMarginClassifier(kernel=svm_kernel, seed=seed)
    return RandomForestClassifier(n_estimators=n_trees, max_features="sqrt", random_state=seed, n_jobs=jobs)


def train_fusion(data: FusionDataset, algorithm: str, seed: int, svm_kernel: str = "linear", n_trees: int = 100,
                 jobs: int = 1) -> FusionModel:
    """标准化（仅用训练数据统计量）后训练 SVM / 逻辑回归 / 随机森林"""
    algorithm = parse_algorithm(algorithm)
    if len(data) == 0 or np.unique(data.y).size < 2:
        raise ModelError("融合训练数据必须同时包含 DP 与 ND 用户")
    pipeline = Pipeline([
        ("scaler", StandardScaler()),
        ("classifier", _make_classifier(algorithm, seed, svm_kernel, n_trees, jobs)),
    ])
    pipeline.fit(data.X, data.y)
    get_logging_manager().log_activity("融合模型训练完成", algorithm=algorithm, n_users=len(data),
                                       columns=len(data.column_names), seed=seed)
    metadata = {"svm_kernel": svm_kernel} if algorithm == SVM else {"n_trees": n_trees} if algorithm == RANDOM_FOREST else {}
    return FusionModel(algorithm, pipeline, tuple(data.column_names), seed, metadata)


def evaluate(model: FusionModel, data: FusionDataset) -> MetricsReport:
    """阈值 0.5 下的五项指标"""
    return compute_metrics(data.y, model.predict_proba(data), algorithm=model.algorithm,
                           groups=list(data.groups), seed=model.seed)


def _accuracy_scorer(estimator, X, y) -> float:
    predicted = (estimator.predict_proba(X)[:, 1] >= THRESHOLD).astype(int)
    return float(np.mean(predicted == y))


def permutation_importance(model: FusionModel, data: FusionDataset, repeats: int = 10, seed: int = 0,
                           jobs: int = 1) -> Dict[str, Tuple[float, float]]:
    """列重要性 = 基线准确率 − 该列随机置换后的平均准确率"""
    if repeats < 1:
        raise ConfigError(f"repeats 必须 ≥ 1: {repeats}")
    model._check(data)
    result = sklearn_permutation_importance(model.estimator, data.X, data.y, scoring=_accuracy_scorer,
                                            n_repeats=repeats, random_state=seed, n_jobs=jobs)
    return OrderedDict(
        (column, (float(mean), float(sd)))
        for column, mean, sd in zip(data.column_names, result.importances_mean, result.importances_std)
    )


def save_metrics(report: MetricsReport, path: str, **extra: Any) -> bool:
    payload = report.to_dict()
    payload.update(extra)
    return save_json_file(path, payload)


def save_importance(importance: Mapping[str, Tuple[float, float]], path: str) -> int:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = pd.DataFrame([{"column": c, "mean_importance": m, "sd": s} for c, (m, s) in importance.items()],
                         columns=["column", "mean_importance", "sd"])
    frame.to_csv(path, index=False, lineterminator="\n")
    return len(frame)


def save_predictions(model: FusionModel, data: FusionDataset, path: str) -> int:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    confidences = model.predict_proba(data)
    frame = pd.DataFrame({
        "user_id": data.user_ids,
        "label": data.y,
        "confidence": confidences,
        "predicted": (confidences >= THRESHOLD).astype(int),
    })
    frame.to_csv(path, index=False, lineterminator="\n")
    return len(frame)
