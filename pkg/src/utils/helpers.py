import hashlib
import json
import os
from datetime import date, datetime, timezone
from typing import Dict, Any, Iterable, Iterator, List, Optional


def load_json_file(file_path: str, default: Optional[Any] = None) -> Any:
    """加载JSON文件，文件不存在或无法解析时原样返回 default"""
    if not os.path.isfile(file_path):
        return default
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return default


def dump_json(data: Any) -> str:
    """稳定的JSON序列化（键排序），保证产物可逐字节复现"""
    return json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def save_json_file(file_path: str, data: Any) -> bool:
    """保存JSON文件"""
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dump_json(data))
    return True


def iter_jsonl(file_path: str) -> Iterator[tuple[int, str]]:
    """逐行读取JSONL文件，返回 (行号, 内容)，跳过空行"""
    with open(file_path, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if line:
                yield line_number, line


def save_jsonl_file(file_path: str, rows: Iterable[Dict[str, Any]]) -> int:
    """保存JSONL文件，返回写入行数"""
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    count = 0
    with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def compute_file_hash(file_path: str) -> Optional[str]:
    """计算文件的SHA-256哈希值"""
    try:
        digest = hashlib.sha256()
        with open(file_path, 'rb') as f:
            for block in iter(lambda: f.read(1 << 20), b''):
                digest.update(block)
        return digest.hexdigest()
    except OSError:
        return None


def stable_seed(*parts: Any) -> int:
    """由若干字段派生确定性的64位种子"""
    text = "\x1f".join(str(part) for part in parts)
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:8], 'little')


def merge_dicts(default: Dict[str, Any], custom: Dict[str, Any]) -> Dict[str, Any]:
    """递归合并字典"""
    result = default.copy()
    for key, value in custom.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = merge_dicts(result[key], value)
        else:
            result[key] = value
    return result


def parse_date(value: Any) -> Optional[date]:
    """解析 YYYY-MM-DD 日期，None 原样返回"""
    if value is None or value == '':
        return None
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return datetime.strptime(str(value), "%Y-%m-%d").date()


def parse_timestamp(value: str) -> datetime:
    """解析 ISO-8601 UTC 时间戳（YYYY-MM-DDTHH:MM:SSZ）"""
    text = value.strip()
    if text.endswith('Z'):
        text = text[:-1] + '+00:00'
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_timestamp(value: datetime) -> str:
    """格式化为 YYYY-MM-DDTHH:MM:SSZ"""
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def get_current_iso_timestamp() -> str:
    """获取当前UTC时间（ISO格式，秒精度）"""
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def chunked(items: List[Any], size: int) -> Iterator[List[Any]]:
    """按固定大小切分列表"""
    for start in range(0, len(items), size):
        yield items[start:start + size]
