"""名词过滤后的 LDA 主题模型（坍缩 Gibbs 采样）与主导主题频数统计"""

from dataclasses import dataclass, field
from datetime import date
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..data.providers import PosProvider
from ..errors import ConfigError, DataValidationError
from ..utils.helpers import save_json_file
from ..utils.logging_manager import get_logging_manager
from .textprep import Chunk, NormalizedText, is_word

NOUN = "NOUN"
BEFORE = "before"
AFTER = "after"


@dataclass
class TopicModel:
    K: int
    topic_word: np.ndarray
    doc_topic: np.ndarray
    vocabulary: Dict[str, int]
    alpha: float
    beta: float
    seed: int
    iterations: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def words(self) -> List[str]:
        inverse = [""] * len(self.vocabulary)
        for word, index in self.vocabulary.items():
            inverse[index] = word
        return inverse


def filter_nouns(tokens: Iterable[str], pos: PosProvider) -> List[str]:
    """只保留被标注为 NOUN 的单词；特殊标记与标点一律丢弃"""
    words = [t for t in tokens if is_word(t)]
    if not words:
        return []
    tags = pos.tag(words)
    if len(tags) != len(words):
        raise DataValidationError(f"词性标注输出长度 {len(tags)} 与输入长度 {len(words)} 不一致")
    return [w for w, tag in zip(words, tags) if tag == NOUN]


def _check_hyperparameters(K: int, alpha: float, beta: float, iterations: int) -> None:
    if K < 2:
        raise ConfigError(f"主题数 K 必须 ≥ 2: {K}")
    if alpha <= 0 or beta <= 0:
        raise ConfigError(f"alpha 与 beta 必须为正: alpha={alpha}, beta={beta}")
    if iterations < 1:
        raise ConfigError(f"迭代次数必须 ≥ 1: {iterations}")


def _doc_topic(n_dk: Sequence[Sequence[int]], K: int, alpha: float) -> np.ndarray:
    counts = np.asarray(n_dk, dtype=float).reshape(len(n_dk), K)
    smoothed = counts + alpha
    return smoothed / smoothed.sum(axis=1, keepdims=True)


def _token_columns(word_ids: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """展平为 (doc, word) 词元数组；第 j 列是所有长度 > j 的文档中第 j 个词元的下标"""
    lengths = np.array([len(ids) for ids in word_ids], dtype=np.int64)
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1])) if len(lengths) else lengths
    doc_of = np.repeat(np.arange(len(lengths)), lengths)
    word_of = np.fromiter((w for ids in word_ids for w in ids), dtype=np.int64, count=int(lengths.sum()))
    max_len = int(lengths.max()) if len(lengths) else 0
    columns = [starts[lengths > j] + j for j in range(max_len)]
    return doc_of, word_of, columns


def _draw(weights: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """按行权重抽取主题：累积和中第一个超过 u·总和 的位置"""
    cumulative = np.cumsum(weights, axis=1)
    drawn = (cumulative <= uniforms[:, None] * cumulative[:, -1:]).sum(axis=1)
    return np.minimum(drawn, weights.shape[1] - 1)


def fit_lda(docs: Sequence[Sequence[str]], K: int = 5, alpha: Optional[float] = None, beta: float = 0.01,
            iterations: int = 1000, seed: int = 0) -> TopicModel:
    """
    固定迭代次数的坍缩 Gibbs 采样；以最后一轮计数加平滑估计 doc_topic 与 topic_word

    每轮按文档内位置逐列扫描：同一列上各文档的词元一起移除、按条件分布重采样、再放回。
    文档内仍是顺序更新，跨文档的同列词元共享同一份主题-词计数。
    """
    alpha = 50.0 / K if alpha is None else float(alpha)
    _check_hyperparameters(K, alpha, beta, iterations)
    vocabulary_words = sorted({w for doc in docs for w in doc})
    if not vocabulary_words:
        raise DataValidationError("过滤后的语料为空，无法训练主题模型")
    vocabulary = {w: i for i, w in enumerate(vocabulary_words)}
    V = len(vocabulary)
    v_beta = V * beta

    rng = np.random.default_rng(seed)
    doc_of, word_of, columns = _token_columns([[vocabulary[w] for w in doc] for doc in docs])
    total = len(word_of)
    z = rng.integers(0, K, size=total)

    n_dk = np.zeros((len(docs), K), dtype=np.int64)
    n_kw = np.zeros((K, V), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, word_of), 1)
    n_k = n_kw.sum(axis=1)

    logger = get_logging_manager()
    for sweep in range(iterations):
        # 每轮一次性抽取全部均匀随机数，保证采样序列只依赖种子
        uniforms = rng.random(total)
        for index in columns:
            d, w, k = doc_of[index], word_of[index], z[index]
            n_dk[d, k] -= 1
            np.subtract.at(n_kw, (k, w), 1)
            n_k -= np.bincount(k, minlength=K)
            weights = (n_dk[d] + alpha) * (n_kw[:, w].T + beta) / (n_k + v_beta)
            k = _draw(weights, uniforms[index])
            z[index] = k
            n_dk[d, k] += 1
            np.add.at(n_kw, (k, w), 1)
            n_k += np.bincount(k, minlength=K)
        if (sweep + 1) % 100 == 0:
            logger.log_activity("Gibbs 采样进度", level="DEBUG", sweep=sweep + 1, iterations=iterations)

    word_counts = n_kw + beta
    topic_word = word_counts / word_counts.sum(axis=1, keepdims=True)
    model = TopicModel(K=K, topic_word=topic_word, doc_topic=_doc_topic(n_dk, K, alpha), vocabulary=vocabulary,
                       alpha=alpha, beta=beta, seed=seed, iterations=iterations,
                       metadata={"n_docs": len(docs), "n_tokens": total, "vocabulary_size": V})
    logger.log_activity("主题模型训练完成", K=K, docs=len(docs), tokens=total, vocabulary=V, seed=seed)
    return model


def infer_doc_topics(model: TopicModel, docs: Sequence[Sequence[str]], iterations: int = 50,
                     seed: int = 0) -> np.ndarray:
    """折叠推断：topic_word 固定，仅对新文档的主题分配做 Gibbs 采样；未登录词忽略"""
    if iterations < 1:
        raise ConfigError(f"迭代次数必须 ≥ 1: {iterations}")
    K = model.K
    if not docs:
        return np.zeros((0, K))
    doc_of, word_of, columns = _token_columns(
        [[model.vocabulary[w] for w in doc if w in model.vocabulary] for doc in docs])
    total = len(word_of)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=total)
    n_dk = np.zeros((len(docs), K), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)

    for _ in range(iterations):
        uniforms = rng.random(total)
        for index in columns:
            d, w = doc_of[index], word_of[index]
            n_dk[d, z[index]] -= 1
            k = _draw((n_dk[d] + model.alpha) * model.topic_word[:, w].T, uniforms[index])
            z[index] = k
            n_dk[d, k] += 1
    return _doc_topic(n_dk, K, model.alpha)


def dominant_topic(weights: Sequence[float]) -> int:
    """权重最大的主题；并列时取最小序号"""
    return int(np.argmax(np.asarray(weights, dtype=float)))


def dominant_topics(model: TopicModel, docs: Optional[Sequence[Sequence[str]]] = None, iterations: int = 50,
                    seed: Optional[int] = None) -> Dict[int, int]:
    """每个文档的主导主题计数；docs 为空时使用训练文档的 doc_topic"""
    weights = model.doc_topic if docs is None else infer_doc_topics(
        model, docs, iterations, model.seed if seed is None else seed)
    counts = {k: 0 for k in range(model.K)}
    for row in weights:
        counts[dominant_topic(row)] += 1
    return counts


def dominant_breakdown(model: TopicModel, labels: Sequence[Optional[str]], keys: Optional[Iterable[str]] = None,
                       total_key: Optional[str] = None) -> Dict[str, Dict[str, Any]]:
    """
    按训练文档的标签（分组或州）统计主导主题计数与占比

    labels 与训练文档一一对应；keys 为空时使用出现过的全部标签，total_key 非空时额外汇总全部文档。
    """
    if len(labels) != len(model.doc_topic):
        raise DataValidationError(f"标签数 {len(labels)} 与训练文档数 {len(model.doc_topic)} 不一致")
    dominant = np.argmax(model.doc_topic, axis=1) if len(labels) else np.zeros(0, dtype=np.int64)
    labels = np.asarray([label or "" for label in labels], dtype=object)
    keys = sorted({label for label in labels if label}) if keys is None else list(keys)

    def summarize(mask: np.ndarray) -> Dict[str, Any]:
        counts = np.bincount(dominant[mask], minlength=model.K)
        n = int(mask.sum())
        return {"n_docs": n, "dominant_counts": counts.tolist(),
                "dominant_share": (counts / n).tolist() if n else [0.0] * model.K}

    breakdown = {key: summarize(labels == key) for key in keys}
    if total_key is not None:
        breakdown[total_key] = summarize(np.ones(len(labels), dtype=bool))
    return breakdown


def top_keywords(model: TopicModel, topic_index: int, n: int = 15) -> List[str]:
    """按概率降序返回前 n 个词，概率相同按字典序"""
    if not 0 <= topic_index < model.K:
        raise IndexError(f"主题序号越界: {topic_index}（K={model.K}）")
    row = model.topic_word[topic_index]
    ranked = sorted(zip(model.words, row.tolist()), key=lambda item: (-item[1], item[0]))
    return [word for word, _ in ranked[:max(n, 0)]]


def topic_alignment(first: TopicModel, second: TopicModel) -> Tuple[List[Tuple[int, int]], List[float]]:
    """按余弦相似度最优匹配两个模型的主题（词表必须一致）"""
    if first.vocabulary != second.vocabulary or first.K != second.K:
        raise ConfigError("只能对齐词表与主题数相同的两个模型")
    a = first.topic_word / np.linalg.norm(first.topic_word, axis=1, keepdims=True)
    b = second.topic_word / np.linalg.norm(second.topic_word, axis=1, keepdims=True)
    similarity = a @ b.T
    rows, cols = linear_sum_assignment(-similarity)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols)]
    return pairs, [float(similarity[r, c]) for r, c in pairs]


def topic_documents(chunks: Sequence[Chunk], pos: PosProvider) -> List[List[str]]:
    """文本块 → 名词序列"""
    return [filter_nouns(NormalizedText(tuple(chunk.tokens)), pos) for chunk in chunks]


def split_by_period(chunks: Sequence[Chunk], split_date: date) -> Dict[str, List[Chunk]]:
    """以 mid_date 划分为分割日期之前 / 之后（含当日）两段；无日期的块丢弃"""
    periods: Dict[str, List[Chunk]] = {BEFORE: [], AFTER: []}
    for chunk in chunks:
        if chunk.mid_date is None:
            continue
        periods[BEFORE if chunk.mid_date < split_date else AFTER].append(chunk)
    return periods


def chunks_in_window(chunks: Sequence[Chunk], start: date, end: date) -> List[Chunk]:
    """mid_date 位于 [start, end] 的文本块"""
    return [c for c in chunks if c.mid_date is not None and start <= c.mid_date <= end]


def topic_report(model: TopicModel, docs: Optional[Sequence[Sequence[str]]] = None, period: str = "all",
                 top_n: int = 15, breakdown: Optional[Dict[str, Dict[str, Any]]] = None,
                 breakdown_name: str = "groups") -> Dict[str, Any]:
    """{topics: [{index, top_keywords, dominant_count}], period, K, seed, ...}；可附带按分组或州的主导主题占比"""
    counts = dominant_topics(model, docs)
    report = {
        "topics": [
            {"index": k, "top_keywords": top_keywords(model, k, top_n), "dominant_count": counts[k]}
            for k in range(model.K)
        ],
        "period": period,
        "K": model.K,
        "seed": model.seed,
        "alpha": model.alpha,
        "beta": model.beta,
        "iterations": model.iterations,
        "n_docs": sum(counts.values()),
    }
    if breakdown is not None:
        report[breakdown_name] = breakdown
    return report


def save_topic_report(report: Dict[str, Any], path: str) -> bool:
    return save_json_file(path, report)
