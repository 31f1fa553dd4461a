"""文本块级抑郁置信度：哈希 n-gram 逻辑回归基线、外部分数适配、用户级聚合与学习曲线"""

import csv
import json
import math
import os
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from datetime import date
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.feature_extraction.text import HashingVectorizer
from sklearn.linear_model import SGDClassifier
from sklearn.model_selection import train_test_split

from ..data.corpus import DP, ND
from ..errors import ConfigError, ModelError, ScoreFormatError
from ..utils.helpers import chunked, parse_date
from ..utils.logging_manager import get_logging_manager
from .metrics import MetricsReport, compute_metrics, to_binary
from .textprep import Chunk

DEFAULT_N_FEATURES = 2 ** 18
MODEL_MAGIC = b"DSGB"
MODEL_VERSION = 1
# magic, version, D, ngram_max, seed, epochs, best_epoch, bias
_HEADER = struct.Struct("<4sHIBqIId")
_LENGTH = struct.Struct("<I")


@dataclass(frozen=True)
class ChunkScore:
    user_id: str
    chunk_index: int
    confidence: float
    mid_date: Optional[date] = None


@dataclass(frozen=True)
class UserScore:
    user_id: str
    mean_confidence: float
    n_chunks: int


def ngram_analyzer(ngram_max: int = 2):
    """返回把标记序列展开为 1..ngram_max 元组的分析器"""
    def analyze(tokens: Sequence[str]) -> List[str]:
        tokens = list(tokens)
        grams = list(tokens)
        for n in range(2, ngram_max + 1):
            grams.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
        return grams
    return analyze


def make_vectorizer(n_features: int = DEFAULT_N_FEATURES, ngram_max: int = 2) -> HashingVectorizer:
    """
    带符号哈希的 n-gram 计数向量化

    输出不是原始计数：每个文本块的计数向量除以自身的 L2 范数（每行范数为 1），
    比例关系保持不变。逻辑回归的输入即为这一归一化后的计数。
    """
    return HashingVectorizer(analyzer=ngram_analyzer(ngram_max), n_features=n_features,
                             alternate_sign=True, norm="l2")


@dataclass
class BaselineModel:
    weights: np.ndarray
    bias: float
    n_features: int = DEFAULT_N_FEATURES
    ngram_max: int = 2
    seed: int = 0
    epochs: int = 0
    best_epoch: int = 0
    history: List[Dict[str, float]] = field(default_factory=list)

    @classmethod
    def zeros(cls, n_features: int = DEFAULT_N_FEATURES, ngram_max: int = 2) -> "BaselineModel":
        return cls(weights=np.zeros(n_features), bias=0.0, n_features=n_features, ngram_max=ngram_max)

    @cached_property
    def vectorizer(self) -> HashingVectorizer:
        return make_vectorizer(self.n_features, self.ngram_max)

    def decision_function(self, token_sequences: Sequence[Sequence[str]]) -> np.ndarray:
        if not token_sequences:
            return np.zeros(0)
        features = self.vectorizer.transform(token_sequences)
        return features @ self.weights + self.bias

    def predict_proba(self, token_sequences: Sequence[Sequence[str]]) -> np.ndarray:
        return expit(self.decision_function(token_sequences))


def _validation_split(y: np.ndarray, seed: int, fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    indices = np.arange(y.size)
    n_val = max(1, int(round(y.size * fraction)))
    if y.size < 4 or n_val >= y.size:
        return indices, indices
    try:
        train_idx, val_idx = train_test_split(indices, test_size=n_val, random_state=seed, stratify=y)
    except ValueError:
        train_idx, val_idx = train_test_split(indices, test_size=n_val, random_state=seed)
    return np.sort(train_idx), np.sort(val_idx)


def train_baseline(chunks: Sequence[Chunk], seed: int, epochs: int = 5, lr: float = 0.05, batch_size: int = 32,
                   n_features: int = DEFAULT_N_FEATURES, ngram_max: int = 2, alpha: float = 1e-5,
                   validation_fraction: float = 0.1) -> BaselineModel:
    """
    9:1 划分训练/验证，在 L2 归一化的哈希 n-gram 计数上用小批量 SGD 训练逻辑回归，
    保留验证集 (accuracy+F1)/2 最高的轮次
    """
    if epochs < 1 or batch_size < 1 or lr <= 0:
        raise ConfigError(f"训练参数无效: epochs={epochs}, batch_size={batch_size}, lr={lr}")
    y = to_binary([c.label for c in chunks])
    if y.size == 0 or y.min() == y.max():
        raise ModelError("训练数据必须同时包含 DP 与 ND 文本块")

    logger = get_logging_manager()
    vectorizer = make_vectorizer(n_features, ngram_max)
    features = vectorizer.transform([c.tokens for c in chunks]).tocsr()
    train_idx, val_idx = _validation_split(y, seed, validation_fraction)

    classifier = SGDClassifier(loss="log_loss", penalty="l2", alpha=alpha, learning_rate="constant", eta0=lr,
                               shuffle=False, random_state=seed)
    rng = np.random.default_rng(seed)
    best: Optional[Tuple[float, np.ndarray, float, int]] = None
    history: List[Dict[str, float]] = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(train_idx)
        for batch in chunked(order.tolist(), batch_size):
            classifier.partial_fit(features[batch], y[batch], classes=np.array([0, 1]))
        weights = classifier.coef_.ravel().copy()
        bias = float(classifier.intercept_[0])
        confidences = expit(features[val_idx] @ weights + bias)
        report = compute_metrics(y[val_idx], confidences)
        criterion = (report.accuracy + report.f1) / 2.0
        history.append({"epoch": epoch, "val_accuracy": report.accuracy, "val_f1": report.f1,
                        "val_auc": report.auc, "criterion": criterion})
        logger.log_activity("基线模型训练轮次完成", level="DEBUG", epoch=epoch, criterion=round(criterion, 6))
        # 并列时取较晚的轮次
        if best is None or criterion >= best[0]:
            best = (criterion, weights, bias, epoch)

    assert best is not None
    logger.log_activity("基线模型训练完成", n_chunks=len(chunks), n_train=len(train_idx), n_val=len(val_idx),
                        best_epoch=best[3], criterion=round(best[0], 6))
    return BaselineModel(weights=best[1], bias=best[2], n_features=n_features, ngram_max=ngram_max, seed=seed,
                         epochs=epochs, best_epoch=best[3], history=history)


def score_chunks(model: BaselineModel, chunks: Sequence[Chunk]) -> List[ChunkScore]:
    """置信度 = sigmoid(线性得分)，保持输入顺序"""
    if not chunks:
        return []
    confidences = model.predict_proba([c.tokens for c in chunks])
    return [ChunkScore(c.user_id, c.chunk_index, float(p), c.mid_date) for c, p in zip(chunks, confidences)]


def save_model(model: BaselineModel, path: str) -> None:
    """写出版本化二进制模型（小端序）"""
    weights = np.ascontiguousarray(model.weights, dtype="<f8")
    if weights.shape != (model.n_features,):
        raise ModelError(f"权重维度 {weights.shape} 与 D={model.n_features} 不一致")
    metadata = json.dumps({"history": model.history}, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.n_features, model.ngram_max, model.seed,
                             model.epochs, model.best_epoch, model.bias))
        f.write(weights.tobytes())
        f.write(_LENGTH.pack(len(metadata)))
        f.write(metadata)


def load_model(path: str) -> BaselineModel:
    """读取 save_model 写出的模型，权重逐位一致"""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ModelError(f"无法读取模型文件 {path}: {e}") from e
    if len(data) < _HEADER.size:
        raise ModelError(f"模型文件过短: {path}")
    magic, version, n_features, ngram_max, seed, epochs, best_epoch, bias = _HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise ModelError(f"不是模型文件（magic={magic!r}）: {path}")
    if version != MODEL_VERSION:
        raise ModelError(f"不支持的模型版本 {version}: {path}")
    offset = _HEADER.size
    end = offset + 8 * n_features
    if len(data) < end + _LENGTH.size:
        raise ModelError(f"模型文件被截断: {path}")
    weights = np.frombuffer(data, dtype="<f8", count=n_features, offset=offset).astype(np.float64)
    (length,) = _LENGTH.unpack_from(data, end)
    try:
        metadata = json.loads(data[end + _LENGTH.size:end + _LENGTH.size + length].decode("utf-8") or "{}")
    except ValueError as e:
        raise ModelError(f"模型元数据损坏: {path}") from e
    return BaselineModel(weights=weights, bias=bias, n_features=n_features, ngram_max=ngram_max, seed=seed,
                         epochs=epochs, best_epoch=best_epoch, history=list(metadata.get("history", [])))


SCORE_COLUMNS = ("user_id", "chunk_index", "confidence", "mid_date")


def import_external_scores(path: str) -> List[ChunkScore]:
    """读取外部模型输出的分数 CSV：user_id,chunk_index,confidence[,mid_date]"""
    try:
        with open(path, "r", encoding="utf-8-sig", newline="") as f:
            rows = list(csv.reader(f))
    except (OSError, UnicodeDecodeError) as e:
        raise ScoreFormatError(f"无法读取分数文件 {path}: {e}") from e
    if not rows:
        raise ScoreFormatError(f"分数文件为空: {path}")
    header = [h.strip() for h in rows[0]]
    if header[:3] != list(SCORE_COLUMNS[:3]) or len(header) > 4 or (len(header) == 4 and header[3] != "mid_date"):
        raise ScoreFormatError(f"分数文件表头无效: {','.join(header)}")

    scores: List[ChunkScore] = []
    seen: Dict[Tuple[str, int], int] = {}
    for row_number, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ScoreFormatError(f"第 {row_number} 行列数应为 {len(header)}，实际为 {len(row)}")
        try:
            user_id = row[0].strip()
            chunk_index = int(row[1])
            confidence = float(row[2])
            mid_date = parse_date(row[3].strip()) if len(row) == 4 else None
        except ValueError as e:
            raise ScoreFormatError(f"第 {row_number} 行格式错误: {e}") from e
        if not user_id:
            raise ScoreFormatError(f"第 {row_number} 行缺少 user_id")
        if not math.isfinite(confidence) or not 0.0 <= confidence <= 1.0:
            raise ScoreFormatError(f"第 {row_number} 行置信度越界: {row[2]}")
        key = (user_id, chunk_index)
        if key in seen:
            raise ScoreFormatError(f"第 {row_number} 行重复的 (user_id, chunk_index): {key}（首次出现于第 {seen[key]} 行）")
        seen[key] = row_number
        scores.append(ChunkScore(user_id, chunk_index, confidence, mid_date))
    return scores


def chunk_scores_frame(scores: Sequence[ChunkScore]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"user_id": s.user_id, "chunk_index": s.chunk_index, "confidence": s.confidence,
          "mid_date": s.mid_date.isoformat() if s.mid_date else ""} for s in scores],
        columns=list(SCORE_COLUMNS),
    )


def save_chunk_scores(scores: Sequence[ChunkScore], path: str) -> int:
    """写出与 import_external_scores 兼容的 CSV"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    chunk_scores_frame(scores).to_csv(path, index=False, lineterminator="\n")
    return len(scores)


def aggregate_user(scores: Sequence[ChunkScore]) -> List[UserScore]:
    """按用户平均文本块置信度（输出按 user_id 排序）"""
    grouped: Dict[str, List[float]] = OrderedDict()
    for score in scores:
        grouped.setdefault(score.user_id, []).append(score.confidence)
    result = []
    for user_id in sorted(grouped):
        values = np.asarray(grouped[user_id])
        mean = float(np.clip(values.mean(), values.min(), values.max()))
        result.append(UserScore(user_id, mean, int(values.size)))
    return result


def save_user_scores(scores: Sequence[UserScore], path: str) -> int:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = pd.DataFrame([asdict(s) for s in scores], columns=["user_id", "mean_confidence", "n_chunks"])
    frame.to_csv(path, index=False, lineterminator="\n")
    return len(frame)


def load_user_scores(path: str) -> List[UserScore]:
    try:
        frame = pd.read_csv(path, dtype={"user_id": str})
        return [UserScore(str(r.user_id), float(r.mean_confidence), int(r.n_chunks)) for r in frame.itertuples()]
    except (OSError, ValueError, AttributeError) as e:
        raise ScoreFormatError(f"无法读取用户分数 {path}: {e}") from e


def split_users(labels: Mapping[str, str], seed: int, test_users: int = 500,
                max_test_fraction: float = 0.1) -> Tuple[List[str], List[str]]:
    """分层抽取固定测试用户集，其余为训练/验证用户；测试用户不进入任何训练环节"""
    user_ids = sorted(labels)
    n_test = min(test_users, int(math.floor(max_test_fraction * len(user_ids))))
    if n_test < 2:
        raise ConfigError(f"用户数 {len(user_ids)} 不足以划分测试集")
    y = [labels[u] for u in user_ids]
    try:
        train_ids, test_ids = train_test_split(user_ids, test_size=n_test, random_state=seed, stratify=y)
    except ValueError:
        train_ids, test_ids = train_test_split(user_ids, test_size=n_test, random_state=seed)
    return sorted(train_ids), sorted(test_ids)


def evaluate_chunk_and_user_levels(scores: Sequence[ChunkScore], labels: Mapping[str, str]) -> Dict[str, MetricsReport]:
    """同一测试集上的文本块级与用户级指标"""
    scored = [s for s in scores if s.user_id in labels]
    chunk_report = compute_metrics([labels[s.user_id] for s in scored], [s.confidence for s in scored],
                                   level="chunk")
    users = aggregate_user(scored)
    user_report = compute_metrics([labels[u.user_id] for u in users], [u.mean_confidence for u in users],
                                  level="user")
    return {"chunk": chunk_report, "user": user_report}


def learning_curve(train_chunks: Sequence[Chunk], test_chunks: Sequence[Chunk], sizes: Sequence[Any], seed: int,
                   **train_kwargs: Any) -> pd.DataFrame:
    """逐步增加训练用户（1:1 分层、嵌套子集），在固定测试文本块上评估"""
    by_user: Dict[str, List[Chunk]] = OrderedDict()
    for chunk in train_chunks:
        by_user.setdefault(chunk.user_id, []).append(chunk)
    labels = {u: cs[0].label for u, cs in by_user.items()}
    rng = np.random.default_rng(seed)
    pools = {label: list(rng.permutation(sorted(u for u, lab in labels.items() if lab == label)))
             for label in (DP, ND)}
    test_users = {c.user_id for c in test_chunks}
    if test_users & set(by_user):
        raise ConfigError("测试用户不得出现在训练集中")

    rows = []
    for size in sizes:
        if size in (None, "all"):
            n = len(by_user)
            selected = set(by_user)
        else:
            n = int(size)
            if n <= 0:
                raise ConfigError(f"学习曲线规模必须为正: {size}")
            n_dp = n // 2
            n_nd = n - n_dp
            if n_dp > len(pools[DP]) or n_nd > len(pools[ND]):
                raise ConfigError(f"学习曲线规模 {n} 超过可用用户数（DP {len(pools[DP])} / ND {len(pools[ND])}）")
            selected = set(pools[DP][:n_dp]) | set(pools[ND][:n_nd])
        subset = [c for u, cs in by_user.items() if u in selected for c in cs]
        model = train_baseline(subset, seed=seed, **train_kwargs)
        report = compute_metrics([c.label for c in test_chunks], [s.confidence for s in score_chunks(model, test_chunks)])
        rows.append({"size": n, "n_train_chunks": len(subset), "accuracy": report.accuracy, "f1": report.f1,
                     "auc": report.auc, "precision": report.precision, "recall": report.recall})
    frame = pd.DataFrame(rows, columns=["size", "n_train_chunks", "accuracy", "f1", "auc", "precision", "recall"])
    monotone = bool(frame["auc"].is_monotonic_increasing) if len(frame) else True
    get_logging_manager().log_activity("学习曲线完成", sizes=list(frame["size"]), auc_monotone=monotone)
    return frame
