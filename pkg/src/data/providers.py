"""人格 / 人口统计 / 词性标注提供者接口及其确定性实现"""

import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from ..errors import ConfigError
from ..utils.helpers import load_json_file, stable_seed
from ..utils.logging_manager import get_logging_manager
from .corpus import UserRecord

TRAITS = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")
AGE_BINS = ("le18", "19_29", "30_39", "ge40")
POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "OTHER")

# 人格分数边缘分布的校准目标 (均值, 标准差)
DEFAULT_PERSONALITY_CALIBRATION: Dict[str, Tuple[float, float]] = {
    "openness": (0.61, 0.28),
    "conscientiousness": (0.28, 0.26),
    "extraversion": (0.32, 0.24),
    "agreeableness": (0.30, 0.26),
    "neuroticism": (0.56, 0.28),
}
DEFAULT_AGE_WEIGHTS = (0.20, 0.45, 0.20, 0.15)

RESOURCES_DIR = os.path.join(os.path.dirname(__file__), "resources")


@dataclass(frozen=True)
class Demographics:
    gender: int
    age_bin: str

    @property
    def age_onehot(self) -> Tuple[int, int, int, int]:
        return tuple(int(self.age_bin == b) for b in AGE_BINS)  # type: ignore[return-value]


class PersonalityProvider(Protocol):
    def personality(self, user: UserRecord, text: str) -> Optional[Dict[str, float]]:
        """返回五大人格分数（[0,1]），不可用时返回 None"""
        ...


class DemographicsProvider(Protocol):
    def demographics(self, user: UserRecord) -> Optional[Demographics]:
        """返回性别与年龄段，不可用时返回 None"""
        ...


class PosProvider(Protocol):
    def tag(self, tokens: Sequence[str]) -> List[str]:
        """为每个标记返回 NOUN/VERB/ADJ/ADV/OTHER 之一"""
        ...


def beta_parameters(mean: float, sd: float) -> Tuple[float, float]:
    """由均值与标准差求 Beta 分布参数"""
    variance = sd * sd
    if not 0.0 < mean < 1.0 or variance <= 0 or variance >= mean * (1.0 - mean):
        raise ConfigError(f"无法构造 Beta 分布: mean={mean}, sd={sd}")
    common = mean * (1.0 - mean) / variance - 1.0
    return mean * common, (1.0 - mean) * common


class StubPersonalityProvider:
    """以 user_id 的哈希为种子，从校准后的 Beta 边缘分布中抽取人格分数"""

    def __init__(self, calibration: Optional[Dict[str, Sequence[float]]] = None, seed: int = 0,
                 unavailable_rate: float = 0.0):
        calibration = calibration or DEFAULT_PERSONALITY_CALIBRATION
        missing = [t for t in TRAITS if t not in calibration]
        if missing:
            raise ConfigError(f"人格校准缺少特质: {', '.join(missing)}")
        self.parameters = {t: beta_parameters(*calibration[t]) for t in TRAITS}
        self.seed = seed
        self.unavailable_rate = unavailable_rate

    def personality(self, user: UserRecord, text: str = "") -> Optional[Dict[str, float]]:
        rng = np.random.default_rng(stable_seed(self.seed, "personality", user.user_id))
        if rng.random() < self.unavailable_rate:
            return None
        return {t: float(rng.beta(*self.parameters[t])) for t in TRAITS}


class StubDemographicsProvider:
    """以 user_id 的哈希确定二元性别与年龄段"""

    def __init__(self, seed: int = 0, age_weights: Sequence[float] = DEFAULT_AGE_WEIGHTS,
                 unavailable_rate: float = 0.0):
        weights = np.asarray(age_weights, dtype=float)
        if weights.shape != (len(AGE_BINS),) or np.any(weights < 0) or weights.sum() <= 0:
            raise ConfigError(f"年龄段权重无效: {list(age_weights)}")
        self.age_weights = weights / weights.sum()
        self.seed = seed
        self.unavailable_rate = unavailable_rate

    def demographics(self, user: UserRecord) -> Optional[Demographics]:
        rng = np.random.default_rng(stable_seed(self.seed, "demographics", user.user_id))
        if rng.random() < self.unavailable_rate:
            return None
        gender = int(rng.random() < 0.5)
        age_bin = AGE_BINS[int(rng.choice(len(AGE_BINS), p=self.age_weights))]
        return Demographics(gender=gender, age_bin=age_bin)


class HttpPersonalityProvider:
    """通过 HTTP 服务获取人格分数（带重试）；请求失败视为不可用"""

    def __init__(self, api_url: str, api_key: str = "", timeout: float = 30.0, retries: int = 3,
                 verify_ssl: bool = True, session: Optional[requests.Session] = None):
        self.api_url = api_url
        self.api_key = api_key
        self.timeout = timeout
        self.verify_ssl = verify_ssl
        self.session = session or requests.Session()
        retry = Retry(total=retries, backoff_factor=0.5, status_forcelist=(429, 500, 502, 503, 504),
                      allowed_methods=frozenset({"POST"}))
        adapter = HTTPAdapter(max_retries=retry)
        self.session.mount("http://", adapter)
        self.session.mount("https://", adapter)

    def personality(self, user: UserRecord, text: str) -> Optional[Dict[str, float]]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"user_id": user.user_id, "content": text, "language": "en"}
        try:
            response = self.session.post(self.api_url, json=payload, headers=headers,
                                         verify=self.verify_ssl, timeout=self.timeout)
            response.raise_for_status()
            data = response.json()
            scores = {t: float(data[t]) for t in TRAITS}
        except (requests.RequestException, ValueError, KeyError, TypeError) as e:
            get_logging_manager().log_warning("人格服务不可用", user_id=user.user_id, error=str(e))
            return None
        if not all(0.0 <= v <= 1.0 for v in scores.values()):
            get_logging_manager().log_warning("人格服务返回越界分数", user_id=user.user_id)
            return None
        return scores


class LexiconPosProvider:
    """基于封闭词表的词性标注（未登录词使用默认标签）"""

    def __init__(self, lexicon: Dict[str, str], default_tag: str = "OTHER"):
        if default_tag not in POS_TAGS:
            raise ConfigError(f"未知词性标签: {default_tag}")
        bad = sorted({t for t in lexicon.values() if t not in POS_TAGS})
        if bad:
            raise ConfigError(f"词性词表包含未知标签: {', '.join(bad)}")
        self.lexicon = {w.lower(): t for w, t in lexicon.items()}
        self.default_tag = default_tag

    @classmethod
    def from_file(cls, path: Optional[str] = None) -> "LexiconPosProvider":
        """加载 {"default_tag": ..., "tags": {TAG: [words]}} 格式的词表"""
        path = path or os.path.join(RESOURCES_DIR, "pos_lexicon.json")
        data = load_json_file(path, default=None)
        if not isinstance(data, dict) or "tags" not in data:
            raise ConfigError(f"词性词表不存在或格式无效: {path}")
        lexicon = {word: tag for tag, words in data["tags"].items() for word in words}
        return cls(lexicon, data.get("default_tag", "OTHER"))

    def tag(self, tokens: Sequence[str]) -> List[str]:
        return [self.lexicon.get(t.lower(), self.default_tag) for t in tokens]


# Penn Treebank 标签前缀到粗粒度标签
_PENN_PREFIXES = (("NN", "NOUN"), ("VB", "VERB"), ("JJ", "ADJ"), ("RB", "ADV"))


class NltkPosProvider:
    """使用 nltk 的平均感知器标注器（可选依赖）"""

    def __init__(self):
        try:
            import nltk
        except ImportError as e:
            raise ConfigError("NltkPosProvider 需要安装 nltk") from e
        self._pos_tag = nltk.pos_tag

    def tag(self, tokens: Sequence[str]) -> List[str]:
        if not tokens:
            return []
        tags = []
        for _, penn in self._pos_tag(list(tokens)):
            tags.append(next((coarse for prefix, coarse in _PENN_PREFIXES if penn.startswith(prefix)), "OTHER"))
        return tags

