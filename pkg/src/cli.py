"""depsignal 命令行入口：子命令、配置文件与 --section.key 覆盖项"""

import argparse
import sys
from typing import Dict, List, Optional, Tuple

from .config import SUBCOMMANDS, PipelineConfig, load_config
from .core.pipeline import TOOL_VERSION, config_from_manifest, load_manifest, run_subcommand, verify_outputs
from .errors import ConfigError

SUBCOMMAND_HELP = {
    "synth": "生成合成语料",
    "cohort": "识别 DP 队列并抽取 ND 对照组",
    "chunk": "规范化推文并切分文本块，划分训练 / 测试用户",
    "features": "提取情感、人口统计、互动、人格与词典类别特征",
    "train": "训练哈希 n-gram 基线分类器",
    "score": "为文本块打分并聚合到用户",
    "import-scores": "导入外部模型的文本块分数",
    "fuse": "训练并评估融合分类器，计算置换重要性",
    "eval": "文本块级与用户级指标及学习曲线",
    "trend": "按分组与地区计算趋势序列",
    "topics": "分时段、分组的主题模型",
    "pipeline": "按顺序执行完整流水线",
}

# 快捷参数 → 点号配置项；kind 为 bool 时是开关
Shortcut = Tuple[Tuple[str, ...], str, type]

COMMON_SHORTCUTS: Tuple[Shortcut, ...] = (
    (("--output",), "paths.output_dir", str),
    (("--corpus",), "paths.corpus", str),
    (("--jobs",), "runtime.jobs", int),
)

COHORT_SHORTCUTS: Tuple[Shortcut, ...] = (
    (("--patterns",), "paths.patterns", str),
    (("--window-days",), "cohort.window_days", int),
    (("--cap",), "cohort.tweet_cap", int),
    (("--control-seed",), "cohort.control_seed", int),
)
CHUNK_SHORTCUTS: Tuple[Shortcut, ...] = (
    (("--target",), "chunking.target_words", int),
    (("--min",), "chunking.min_words", int),
    (("--start",), "trend.start", str),
)
FUSE_SHORTCUTS: Tuple[Shortcut, ...] = (
    (("--groups",), "fusion.groups", str),
    (("--algo", "--algorithm"), "fusion.algorithm", str),
)
TREND_SHORTCUTS: Tuple[Shortcut, ...] = (
    (("--group",), "trend.group", str),
    (("--bin-days",), "trend.bin_days", int),
    (("--trim",), "trend.trim_fraction", float),
    (("--window",), "trend.window", int),
    (("--start",), "trend.start", str),
    (("--end",), "trend.end", str),
)
TOPICS_SHORTCUTS: Tuple[Shortcut, ...] = (
    (("--k",), "topics.K", int),
    (("--split-date",), "topics.split_date", str),
)


def _union(*groups: Tuple[Shortcut, ...]) -> Tuple[Shortcut, ...]:
    seen, merged = set(), []
    for group in groups:
        for shortcut in group:
            if shortcut[0] not in seen:
                seen.add(shortcut[0])
                merged.append(shortcut)
    return tuple(merged)


SUBCOMMAND_SHORTCUTS: Dict[str, Tuple[Shortcut, ...]] = {
    "cohort": COHORT_SHORTCUTS,
    "chunk": CHUNK_SHORTCUTS + ((("--trend",), "chunking.trend_mode", bool),),
    "fuse": FUSE_SHORTCUTS + ((("--seed",), "fusion.seed", int),),
    "trend": TREND_SHORTCUTS,
    "topics": TOPICS_SHORTCUTS,
    # --seed 与 --trend 只在单个子命令中有明确含义
    "pipeline": _union(COHORT_SHORTCUTS, CHUNK_SHORTCUTS, FUSE_SHORTCUTS, TREND_SHORTCUTS, TOPICS_SHORTCUTS),
}


def shortcuts_for(command: str) -> Tuple[Shortcut, ...]:
    return COMMON_SHORTCUTS + SUBCOMMAND_SHORTCUTS.get(command, ())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depsignal",
        description="抑郁信号流水线：队列识别、文本分类、特征融合、趋势与主题分析",
        epilog="任意配置项都可以用 --section.key value 覆盖，例如 --trend.bin_days 3",
    )
    parser.add_argument("--version", action="version", version=f"depsignal {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True, help="子命令")
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name, help=SUBCOMMAND_HELP[name], allow_abbrev=False)
        sub.add_argument("--config", default=None, help="配置文件路径（JSON 或 TOML）")
        sub.add_argument("--from-manifest", default=None, help="使用运行清单中的配置快照重新运行")
        sub.add_argument("--verify", action="store_true", help="运行后比较产物哈希与 --from-manifest 清单是否一致")
        for flags, dotted, kind in shortcuts_for(name):
            dest = dotted.replace(".", "__")
            if kind is bool:
                sub.add_argument(*flags, dest=dest, action="store_const", const=True, default=None,
                                 help=f"等价于 --{dotted} true")
            else:
                sub.add_argument(*flags, dest=dest, type=kind, default=None, help=f"等价于 --{dotted}")
    return parser


def _shortcut_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for _, dotted, _ in shortcuts_for(args.command):
        value = getattr(args, dotted.replace(".", "__"), None)
        if value is not None:
            section, key = dotted.split(".")
            overrides.setdefault(section, {})[key] = value
    return overrides


def build_config(args: argparse.Namespace, extra: List[str]) -> PipelineConfig:
    if args.from_manifest:
        config = config_from_manifest(args.from_manifest)
        if args.config:
            config.load_settings(args.config)
    else:
        config = load_config(args.config)
    config.apply_overrides(extra)
    shortcuts = _shortcut_overrides(args)
    if shortcuts:
        config.update_settings(shortcuts)
    return config


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.verify and not args.from_manifest:
            raise ConfigError("--verify 需要同时指定 --from-manifest")
        config = build_config(args, extra)
    except ConfigError as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return e.exit_code

    code = run_subcommand(args.command, config)
    if code == 0 and args.verify:
        mismatches = verify_outputs(load_manifest(args.from_manifest), config.output_dir)
        if mismatches:
            for relative, hashes in sorted(mismatches.items()):
                print(f"哈希不一致: {relative} 期望 {hashes['expected']} 实际 {hashes['actual']}", file=sys.stderr)
            return 3
        print("所有产物哈希与清单一致")
    return code


if __name__ == "__main__":
    sys.exit(main())
