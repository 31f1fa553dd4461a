"""流水线配置：默认值 + 配置文件（JSON / TOML）+ 命令行点号覆盖"""

import copy
import json
import os
from typing import Any, Dict, List, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .data.providers import DEFAULT_PERSONALITY_CALIBRATION
from .errors import ConfigError
from .utils.helpers import load_json_file, merge_dicts, parse_date, save_json_file

SUBCOMMANDS = ("synth", "cohort", "chunk", "features", "train", "score", "import-scores", "fuse", "eval", "trend",
               "topics", "pipeline")
TREND_GROUPS = ("all", "cohort", "state")


class PipelineConfig:
    """配置管理类，负责合并默认配置、配置文件与命令行覆盖项"""

    def __init__(self, settings: Optional[Dict[str, Any]] = None, config_file: Optional[str] = None):
        self.config_file = config_file
        self.default_settings: Dict[str, Any] = {
            'paths': {
                'corpus': None,  # 为空时使用 output_dir/corpus.jsonl（由 synth 生成）
                'patterns': None,  # 为空时使用内置模式文件
                'lexicon': None,
                'pos_lexicon': None,
                'external_scores': None,
                'output_dir': 'output'
            },
            'synth': {
                'n_dp': 100,
                'n_nd': 100,
                'seed': 7,
                'tweets_per_user': [60, 120],
                'words_per_tweet': [8, 20],
                'signal_rate_dp': 0.08,
                'signal_rate_nd': 0.01,
                'start_date': '2020-01-01',
                'end_date': '2020-05-22',
                'plant_self_reports': True,
                'step_date': None,
                'step_rate_dp': None,
                # 人格提供者 stub 的 Beta 边缘分布：特质 → [均值, 标准差]
                'personality_calibration': {t: list(v) for t, v in DEFAULT_PERSONALITY_CALIBRATION.items()}
            },
            'cohort': {
                'window_days': 90,
                'tweet_cap': 200,
                'control_seed': 11,
                'control_size': None,  # 为空时与 DP 用户数相同
                'reference_date': None,
                'strip_diagnosis_tweets': True
            },
            'chunking': {
                'target_words': 250,
                'min_words': 125,
                'trend_mode': False  # true 时只写出 trend.start 起的连续文本块流，不划分用户
            },
            'split': {
                'seed': 13,
                'test_users': 500,
                'max_test_fraction': 0.1
            },
            'scorer': {
                'seed': 17,
                'epochs': 5,
                'lr': 0.05,
                'batch_size': 32,
                'n_features': 262144,
                'ngram_max': 2,
                'alpha': 1e-5,
                'validation_fraction': 0.1,
                'learning_curve_sizes': [200, 500, 1000]
            },
            'external_adapter': {
                # 仅记录外部 Transformer 微调的超参数，写入清单
                'optimizer': 'AdamW',
                'lr_bert_roberta': 2e-5,
                'lr_xlnet': 8e-6,
                'batch_size': 8,
                'loss': 'cross_entropy',
                'max_tokens': 512
            },
            'features': {
                'min_personality_words': 100,
                'provider_seed': 19,
                'personality_provider': 'stub',  # stub, http
                'personality_api_url': '',
                'personality_api_key': '',
                'timeout': 30,
                'retry_count': 3,
                'verify_ssl': True,
                'personality_unavailable_rate': 0.0,
                'demographics_unavailable_rate': 0.0
            },
            'fusion': {
                'groups': ['V', 'D', 'E', 'P', 'L', 'SCORE'],
                'algorithm': 'SVM',  # SVM, LOGREG, RANDOM_FOREST
                'seed': 23,
                'svm_kernel': 'linear',
                'n_trees': 100,
                'importance_repeats': 10
            },
            'trend': {
                'bin_days': 3,
                'trim_fraction': 0.10,
                'trim_scope': 'global',  # global, bin
                'window': 5,
                'start': '2020-01-01',
                'end': '2020-05-22',
                'min_users': 550,
                'states': ['NY', 'CA', 'FL'],
                'group': 'all'  # all, cohort, state
            },
            'topics': {
                'K': 5,
                'split_date': '2020-03-13',
                'seed': 29,
                'alpha': None,  # 为空时取 50/K
                'beta': 0.01,
                'iterations': 1000,
                'top_n': 15,
                'pos_provider': 'lexicon',  # lexicon, nltk
                'state_start': '2020-03-03'  # 分州主题模型的起始日期，截止到 trend.end
            },
            'logging': {
                'log_level': 'INFO',
                'log_formatter': 'json',
                'logs_dir': None  # 为空时使用 output_dir/logs
            },
            'runtime': {
                'jobs': 1
            }
        }
        self.settings: Dict[str, Any] = copy.deepcopy(self.default_settings)
        if config_file:
            self.load_settings(config_file)
        if settings:
            self.update_settings(settings)

    def load_settings(self, config_file: str) -> None:
        """加载 JSON 或 TOML 配置文件并递归合并到默认配置上"""
        if not os.path.isfile(config_file):
            raise ConfigError(f"配置文件不存在: {config_file}")
        if config_file.endswith(".toml"):
            try:
                with open(config_file, "rb") as f:
                    config_data = tomllib.load(f)
            except (OSError, tomllib.TOMLDecodeError) as e:
                raise ConfigError(f"无法解析配置文件 {config_file}: {e}") from e
        else:
            config_data = load_json_file(config_file, default=None)
            if config_data is None:
                raise ConfigError(f"无法解析配置文件 {config_file}")
        if not isinstance(config_data, dict):
            raise ConfigError(f"配置文件顶层必须是对象: {config_file}")
        self.config_file = config_file
        self.update_settings(config_data)

    def update_settings(self, new_settings: Dict[str, Any]) -> None:
        """更新设置；未知配置段或键视为错误"""
        for section, values in new_settings.items():
            if section not in self.default_settings:
                raise ConfigError(f"未知配置段: {section}")
            if not isinstance(values, dict):
                raise ConfigError(f"配置段 {section} 必须是对象")
            unknown = sorted(set(values) - set(self.default_settings[section]))
            if unknown:
                raise ConfigError(f"配置段 {section} 包含未知键: {', '.join(unknown)}")
            for key, value in values.items():
                _check_type(f"{section}.{key}", self.default_settings[section][key], value)
        self.settings = merge_dicts(self.settings, new_settings)

    def apply_overrides(self, args: Sequence[str]) -> None:
        """应用 --section.key value 或 --section.key=value 形式的覆盖项"""
        overrides: Dict[str, Dict[str, Any]] = {}
        args = list(args)
        i = 0
        while i < len(args):
            arg = args[i]
            if not arg.startswith("--") or "." not in arg:
                raise ConfigError(f"无法识别的参数: {arg}")
            name = arg[2:]
            if "=" in name:
                name, raw = name.split("=", 1)
            elif i + 1 < len(args):
                i += 1
                raw = args[i]
            else:
                raise ConfigError(f"参数缺少取值: {arg}")
            section, _, key = name.partition(".")
            overrides.setdefault(section, {})[key] = parse_override_value(raw)
            i += 1
        if overrides:
            self.update_settings(overrides)

    def get(self, dotted: str) -> Any:
        section, _, key = dotted.partition(".")
        try:
            return self.settings[section][key] if key else self.settings[section]
        except KeyError as e:
            raise ConfigError(f"未知配置项: {dotted}") from e

    def section(self, name: str) -> Dict[str, Any]:
        return copy.deepcopy(self.get(name))

    @property
    def output_dir(self) -> str:
        return self.settings['paths']['output_dir']

    @property
    def jobs(self) -> int:
        return int(self.settings['runtime']['jobs'])

    def snapshot(self) -> Dict[str, Any]:
        """写入清单的配置快照"""
        return copy.deepcopy(self.settings)

    def save_settings(self, config_file: str) -> bool:
        return save_json_file(config_file, self.settings)

    def validate(self, subcommand: str) -> None:
        """检查数值范围与子命令读取的路径，违规时抛出 ConfigError"""
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"未知子命令: {subcommand}")
        s = self.settings
        errors: List[str] = []

        def check(condition: bool, message: str) -> None:
            if not condition:
                errors.append(message)

        chunking = s['chunking']
        check(chunking['target_words'] >= chunking['min_words'] >= 1,
              "chunking: 需要 target_words ≥ min_words ≥ 1")
        check(not (chunking['trend_mode'] and subcommand == "pipeline"),
              "chunking.trend_mode 只能用于单独运行的 chunk 子命令")
        cohort = s['cohort']
        check(cohort['window_days'] >= 1, "cohort.window_days 必须 ≥ 1")
        check(cohort['tweet_cap'] >= 1, "cohort.tweet_cap 必须 ≥ 1")
        check(cohort['control_size'] is None or cohort['control_size'] >= 0, "cohort.control_size 不能为负")
        split = s['split']
        check(split['test_users'] >= 2, "split.test_users 必须 ≥ 2")
        check(0.0 < split['max_test_fraction'] < 1.0, "split.max_test_fraction 必须位于 (0,1)")
        scorer = s['scorer']
        check(scorer['epochs'] >= 1, "scorer.epochs 必须 ≥ 1")
        check(scorer['lr'] > 0, "scorer.lr 必须为正")
        check(scorer['batch_size'] >= 1, "scorer.batch_size 必须 ≥ 1")
        check(scorer['n_features'] >= 2, "scorer.n_features 必须 ≥ 2")
        check(scorer['ngram_max'] >= 1, "scorer.ngram_max 必须 ≥ 1")
        check(0.0 <= scorer['validation_fraction'] < 1.0, "scorer.validation_fraction 必须位于 [0,1)")
        features = s['features']
        check(features['personality_provider'] in ("stub", "http"), "features.personality_provider 必须为 stub 或 http")
        check(features['personality_provider'] != "http" or bool(features['personality_api_url']),
              "features.personality_provider = http 时必须设置 personality_api_url")
        fusion = s['fusion']
        check(fusion['n_trees'] >= 1, "fusion.n_trees 必须 ≥ 1")
        check(fusion['importance_repeats'] >= 1, "fusion.importance_repeats 必须 ≥ 1")
        check(fusion['svm_kernel'] in ("linear", "rbf"), "fusion.svm_kernel 必须为 linear 或 rbf")
        trend = s['trend']
        check(trend['bin_days'] >= 1, "trend.bin_days 必须 ≥ 1")
        check(0.0 <= trend['trim_fraction'] < 0.5, "trend.trim_fraction 必须位于 [0,0.5)")
        check(trend['window'] >= 1 and trend['window'] % 2 == 1, "trend.window 必须为正奇数")
        check(trend['trim_scope'] in ("global", "bin"), "trend.trim_scope 必须为 global 或 bin")
        check(trend['min_users'] >= 0, "trend.min_users 不能为负")
        check(trend['group'] in TREND_GROUPS, f"trend.group 必须为 {' / '.join(TREND_GROUPS)} 之一")
        topics = s['topics']
        check(topics['K'] >= 2, "topics.K 必须 ≥ 2")
        check(topics['beta'] > 0, "topics.beta 必须为正")
        check(topics['alpha'] is None or topics['alpha'] > 0, "topics.alpha 必须为正")
        check(topics['iterations'] >= 1, "topics.iterations 必须 ≥ 1")
        check(topics['top_n'] >= 1, "topics.top_n 必须 ≥ 1")
        check(topics['pos_provider'] in ("lexicon", "nltk"), "topics.pos_provider 必须为 lexicon 或 nltk")
        check(self.jobs >= 1, "runtime.jobs 必须 ≥ 1")

        for dotted in ("synth.start_date", "synth.end_date", "synth.step_date", "cohort.reference_date",
                       "trend.start", "trend.end", "topics.split_date", "topics.state_start"):
            try:
                parse_date(self.get(dotted))
            except (TypeError, ValueError):
                errors.append(f"{dotted} 不是有效日期 (YYYY-MM-DD): {self.get(dotted)}")
        if not errors and parse_date(trend['end']) < parse_date(trend['start']):
            errors.append("trend.end 早于 trend.start")

        paths = s['paths']
        for key in ("patterns", "lexicon", "pos_lexicon"):
            if paths[key] and not os.path.isfile(paths[key]):
                errors.append(f"paths.{key} 不存在: {paths[key]}")
        if subcommand == "cohort" or (subcommand == "pipeline" and paths['corpus']):
            corpus = paths['corpus'] or os.path.join(self.output_dir, "corpus.jsonl")
            if not os.path.isfile(corpus):
                errors.append(f"语料文件不存在: {corpus}")
        if subcommand == "import-scores" and not (paths['external_scores'] and os.path.isfile(paths['external_scores'])):
            errors.append(f"paths.external_scores 不存在: {paths['external_scores']}")

        if errors:
            raise ConfigError("; ".join(errors))


def _check_type(name: str, default: Any, value: Any) -> None:
    """取值类型必须与默认值一致（默认值为 None 的项不限制）"""
    if default is None:
        return
    if isinstance(default, bool):
        valid = isinstance(value, bool)
    elif isinstance(default, (int, float)):
        valid = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, list):
        valid = isinstance(value, (list, str))
    else:
        valid = isinstance(value, type(default))
    if not valid:
        raise ConfigError(f"配置项 {name} 类型错误: {value!r}")


def parse_override_value(raw: str) -> Any:
    """按 JSON 字面量解析，失败时保留为字符串"""
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def load_config(config_file: Optional[str] = None, overrides: Sequence[str] = ()) -> PipelineConfig:
    config = PipelineConfig(config_file=config_file)
    config.apply_overrides(overrides)
    return config
