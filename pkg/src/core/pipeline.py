"""子命令编排：暂存目录、运行清单与审计日志"""

import json
import os
import platform
import shutil
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import psutil

from ..config import PipelineConfig
from ..data.corpus import DP, ND, UserRecord, load_corpus, save_corpus, validate_corpus
from ..data.providers import (HttpPersonalityProvider, LexiconPosProvider, NltkPosProvider, StubDemographicsProvider,
                              StubPersonalityProvider)
from ..data.statistics import StatisticsManager, corpus_summary
from ..data.synthetic import SynthSpec, generate_synthetic
from ..errors import ConfigError, DataValidationError, DepSignalError
from ..utils.async_helpers import AsyncFileManager
from ..utils.helpers import (compute_file_hash, dump_json, get_current_iso_timestamp, load_json_file, parse_date,
                             save_json_file)
from ..utils.logging_manager import configure_logging, get_logging_manager
from . import cohort, features, fusion, scorer, textprep, topics, trend

TOOL_VERSION = "0.1.0"
PIPELINE_STAGES = ("cohort", "chunk", "train", "score", "features", "fuse", "eval", "trend", "topics")


@dataclass
class StageResult:
    """子命令在暂存目录中写出的产物及其输入"""
    inputs: Dict[str, str] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)


def host_info() -> Dict[str, Any]:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "cpu_count": psutil.cpu_count(logical=True),
        "total_memory": psutil.virtual_memory().total,
    }


def _as_list(value: Any) -> List[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return [str(v) for v in value]


class PipelineRunner:
    """流水线运行器，负责执行子命令并在成功后提交产物"""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.output_dir = config.output_dir
        self.logger = get_logging_manager()

    # ---- 路径 ----

    def artifact(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def manifest_path(self, name: str) -> str:
        return os.path.join(self.output_dir, "manifests", f"{name}.json")

    @property
    def corpus_path(self) -> str:
        return self.config.get("paths.corpus") or self.artifact("corpus.jsonl")

    def _require(self, *names: str) -> None:
        missing = [n for n in names if not os.path.isfile(self.artifact(n))]
        if missing:
            raise ConfigError(f"缺少前序产物: {', '.join(missing)}（请先运行对应子命令）")

    def _relative(self, path: str) -> str:
        absolute = os.path.abspath(path)
        root = os.path.abspath(self.output_dir)
        if absolute.startswith(root + os.sep):
            return os.path.relpath(absolute, root).replace(os.sep, "/")
        return path

    # ---- 执行与提交 ----

    def run(self, name: str) -> Dict[str, Any]:
        """执行单个子命令，返回清单"""
        if name == "pipeline":
            return self.run_pipeline()
        stages: Dict[str, Callable[[str], StageResult]] = {
            "synth": self.synth,
            "cohort": self.build_cohort,
            "chunk": self.chunk,
            "train": self.train,
            "score": self.score,
            "import-scores": self.import_scores,
            "features": self.extract_features,
            "fuse": self.fuse,
            "eval": self.evaluate,
            "trend": self.trend,
            "topics": self.topics,
        }
        if name not in stages:
            raise ConfigError(f"未知子命令: {name}")
        return self._run_stage(name, stages[name])

    def _run_stage(self, name: str, stage: Callable[[str], StageResult]) -> Dict[str, Any]:
        staging = os.path.join(self.output_dir, f".staging-{name}")
        shutil.rmtree(staging, ignore_errors=True)
        os.makedirs(staging)
        started = time.perf_counter()
        self.logger.set_context(subcommand=name)
        self.logger.log_activity("子命令开始")
        try:
            result = stage(staging)
            outputs = self._commit(staging)
        except Exception as e:
            shutil.rmtree(staging, ignore_errors=True)
            self.logger.log_audit(name, False, elapsed=round(time.perf_counter() - started, 3), error=str(e))
            raise
        finally:
            self.logger.set_context(subcommand=None)
        manifest = self._write_manifest(name, result, outputs)
        self.logger.log_audit(name, True, elapsed=round(time.perf_counter() - started, 3), outputs=len(outputs))
        return manifest

    def _commit(self, staging: str) -> List[str]:
        """把暂存目录中的文件移动到输出目录，返回相对路径列表"""
        committed = []
        for root, _, files in os.walk(staging):
            for filename in files:
                source = os.path.join(root, filename)
                relative = os.path.relpath(source, staging)
                target = self.artifact(relative)
                os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
                os.replace(source, target)
                committed.append(relative.replace(os.sep, "/"))
        shutil.rmtree(staging, ignore_errors=True)
        return sorted(committed)

    def _write_manifest(self, name: str, result: StageResult, outputs: Sequence[str]) -> Dict[str, Any]:
        manifest = {
            "tool": "depsignal",
            "version": TOOL_VERSION,
            "subcommand": name,
            "config": self.config.snapshot(),
            "seeds": dict(sorted(result.seeds.items())),
            "inputs": {self._relative(path): digest for path, digest in sorted(result.inputs.items())},
            "outputs": {rel: compute_file_hash(self.artifact(rel)) for rel in outputs},
            "summary": result.summary,
            "host": host_info(),
            "created_at": get_current_iso_timestamp(),
        }
        save_json_file(self.manifest_path(name), manifest)
        return manifest

    def _inputs(self, *paths: str) -> Dict[str, str]:
        return {path: compute_file_hash(path) for path in paths if path and os.path.isfile(path)}

    # ---- 读取前序产物 ----

    def _load_cohort(self) -> List[UserRecord]:
        self._require("cohort.jsonl")
        return load_corpus(self.artifact("cohort.jsonl"))

    def _labels(self, users: Sequence[UserRecord]) -> Dict[str, str]:
        return {u.user_id: u.label for u in users if u.label in (DP, ND)}

    def _load_split(self) -> Dict[str, Any]:
        self._require("split.json")
        return load_json_file(self.artifact("split.json"))

    def _patterns(self) -> cohort.PatternSet:
        return cohort.load_patterns(self.config.get("paths.patterns"))

    def _train_kwargs(self) -> Dict[str, Any]:
        s = self.config.section("scorer")
        return {"epochs": s["epochs"], "lr": s["lr"], "batch_size": s["batch_size"], "n_features": s["n_features"],
                "ngram_max": s["ngram_max"], "alpha": s["alpha"], "validation_fraction": s["validation_fraction"]}

    # ---- 子命令 ----

    def synth(self, staging: str) -> StageResult:
        spec = SynthSpec.from_dict(self.config.section("synth"))
        users = generate_synthetic(spec)
        save_corpus(users, os.path.join(staging, "corpus.jsonl"))
        return StageResult(seeds={"synth": spec.seed}, summary=corpus_summary(users))

    def build_cohort(self, staging: str) -> StageResult:
        corpus_path = self.corpus_path
        if not os.path.isfile(corpus_path):
            raise ConfigError(f"语料文件不存在: {corpus_path}")
        users = load_corpus(corpus_path)
        report = validate_corpus(users)
        if not report.ok:
            self.logger.log_warning("语料存在不变量违规", violations=len(report.violations))
        patterns = self._patterns()
        c = self.config.section("cohort")
        dp_users = cohort.build_dp_cohort(users, patterns, c["window_days"], c["tweet_cap"],
                                          parse_date(c["reference_date"]), c["strip_diagnosis_tweets"])
        n_control = len(dp_users) if c["control_size"] is None else int(c["control_size"])
        nd_users = cohort.sample_control(users, {u.user_id for u in dp_users}, n_control, patterns,
                                         c["control_seed"], c["tweet_cap"])
        members = sorted(dp_users + nd_users, key=lambda u: u.user_id)
        save_corpus(members, os.path.join(staging, "cohort.jsonl"))
        cohort_report = {
            "n_input_users": len(users),
            "n_dp": len(dp_users),
            "n_nd": len(nd_users),
            "control_seed": c["control_seed"],
            "validation": report.to_dict(),
            "summary": corpus_summary(members),
            "daily_tweets": StatisticsManager(members).get_daily_statistics(),
        }
        save_json_file(os.path.join(staging, "cohort_report.json"), cohort_report)
        return StageResult(inputs=self._inputs(corpus_path, self.config.get("paths.patterns")),
                           seeds={"control": c["control_seed"]},
                           summary={"n_dp": len(dp_users), "n_nd": len(nd_users)})

    def chunk(self, staging: str) -> StageResult:
        users = self._load_cohort()
        c = self.config.section("chunking")
        t = self.config.section("trend")
        trend_chunks = [chunk for user in users for chunk in textprep.chunk_stream_for_trend(
            user, parse_date(t["start"]), c["target_words"], c["min_words"], end_date=parse_date(t["end"]))]
        textprep.save_chunks(trend_chunks, os.path.join(staging, "trend_chunks.jsonl"))
        inputs = self._inputs(self.artifact("cohort.jsonl"))
        if c["trend_mode"]:
            return StageResult(inputs=inputs, summary={"trend_chunks": len(trend_chunks), "trend_mode": True})

        s = self.config.section("split")
        train_ids, test_ids = scorer.split_users(self._labels(users), s["seed"], s["test_users"],
                                                 s["max_test_fraction"])
        chunks = textprep.chunk_corpus(users, c["target_words"], c["min_words"])
        textprep.save_chunks(chunks, os.path.join(staging, "chunks.jsonl"))
        save_json_file(os.path.join(staging, "split.json"), {"seed": s["seed"], "train": train_ids, "test": test_ids})
        return StageResult(inputs=inputs, seeds={"split": s["seed"]},
                           summary={"chunks": len(chunks), "trend_chunks": len(trend_chunks),
                                    "train_users": len(train_ids), "test_users": len(test_ids)})

    def train(self, staging: str) -> StageResult:
        self._require("chunks.jsonl")
        split = self._load_split()
        train_ids = set(split["train"])
        chunks = [c for c in textprep.load_chunks(self.artifact("chunks.jsonl")) if c.user_id in train_ids]
        seed = self.config.get("scorer.seed")
        model = scorer.train_baseline(chunks, seed=seed, **self._train_kwargs())
        scorer.save_model(model, os.path.join(staging, "model.bin"))
        save_json_file(os.path.join(staging, "training.json"), {
            "n_train_chunks": len(chunks),
            "best_epoch": model.best_epoch,
            "history": model.history,
            "external_adapter": self.config.section("external_adapter"),
        })
        return StageResult(inputs=self._inputs(self.artifact("chunks.jsonl"), self.artifact("split.json")),
                           seeds={"scorer": seed}, summary={"best_epoch": model.best_epoch})

    def _write_scores(self, staging: str, chunk_scores: Sequence[scorer.ChunkScore],
                      trend_scores: Sequence[scorer.ChunkScore]) -> Dict[str, Any]:
        scorer.save_chunk_scores(chunk_scores, os.path.join(staging, "chunk_scores.csv"))
        scorer.save_chunk_scores(trend_scores, os.path.join(staging, "trend_scores.csv"))
        users = scorer.aggregate_user(chunk_scores)
        scorer.save_user_scores(users, os.path.join(staging, "user_scores.csv"))
        return {"chunk_scores": len(chunk_scores), "trend_scores": len(trend_scores), "users": len(users)}

    def score(self, staging: str) -> StageResult:
        self._require("model.bin", "chunks.jsonl", "trend_chunks.jsonl")
        model = scorer.load_model(self.artifact("model.bin"))
        chunk_scores = scorer.score_chunks(model, textprep.load_chunks(self.artifact("chunks.jsonl")))
        trend_scores = scorer.score_chunks(model, textprep.load_chunks(self.artifact("trend_chunks.jsonl")))
        summary = self._write_scores(staging, chunk_scores, trend_scores)
        return StageResult(inputs=self._inputs(self.artifact("model.bin"), self.artifact("chunks.jsonl"),
                                               self.artifact("trend_chunks.jsonl")), summary=summary)

    def import_scores(self, staging: str) -> StageResult:
        path = self.config.get("paths.external_scores")
        if not path or not os.path.isfile(path):
            raise ConfigError(f"paths.external_scores 不存在: {path}")
        imported = scorer.import_external_scores(path)
        if os.path.isfile(self.artifact("chunks.jsonl")):
            # 外部分数缺少日期时用文本块的 mid_date 补齐
            dates = {(c.user_id, c.chunk_index): c.mid_date
                     for c in textprep.load_chunks(self.artifact("chunks.jsonl"))}
            imported = [s if s.mid_date else scorer.ChunkScore(s.user_id, s.chunk_index, s.confidence,
                                                                dates.get((s.user_id, s.chunk_index)))
                        for s in imported]
        trend_scores = [s for s in imported if s.mid_date is not None]
        summary = self._write_scores(staging, imported, trend_scores)
        return StageResult(inputs=self._inputs(path, self.artifact("chunks.jsonl")), summary=summary)

    def _personality_provider(self, f: Dict[str, Any]):
        if f["personality_provider"] == "http":
            return HttpPersonalityProvider(f["personality_api_url"], f["personality_api_key"], f["timeout"],
                                           f["retry_count"], f["verify_ssl"])
        calibration = SynthSpec.from_dict(self.config.section("synth")).personality_calibration
        return StubPersonalityProvider(calibration, seed=f["provider_seed"],
                                       unavailable_rate=f["personality_unavailable_rate"])

    def extract_features(self, staging: str) -> StageResult:
        users = self._load_cohort()
        f = self.config.section("features")
        lexicon_path = self.config.get("paths.lexicon")
        lexicon = features.load_lexicon(lexicon_path)
        demographics = StubDemographicsProvider(seed=f["provider_seed"],
                                                unavailable_rate=f["demographics_unavailable_rate"])
        vectors = features.extract_features(users, lexicon, self._personality_provider(f), demographics,
                                            jobs=self.config.jobs,
                                            min_personality_words=f["min_personality_words"])
        labels = self._labels(users)
        features.save_feature_table(vectors, labels, os.path.join(staging, "features.csv"))
        tests = features.compare_groups(vectors, labels)
        tests.to_csv(os.path.join(staging, "group_tests.csv"), index=False, lineterminator="\n")
        return StageResult(inputs=self._inputs(self.artifact("cohort.jsonl"), lexicon_path),
                           seeds={"providers": f["provider_seed"]},
                           summary={"users": len(vectors), "complete": sum(1 for v in vectors if v.complete)})

    def fuse(self, staging: str) -> StageResult:
        self._require("user_scores.csv", "features.csv")
        users = self._load_cohort()
        split = self._load_split()
        fz = self.config.section("fusion")
        data = fusion.build_fusion_dataset(scorer.load_user_scores(self.artifact("user_scores.csv")),
                                           features.load_feature_table(self.artifact("features.csv")),
                                           self._labels(users), fz["groups"])
        train, test = data.subset(split["train"]), data.subset(split["test"])
        model = fusion.train_fusion(train, fz["algorithm"], fz["seed"], fz["svm_kernel"], fz["n_trees"],
                                    self.config.jobs)
        report = fusion.evaluate(model, test)
        importance = fusion.permutation_importance(model, test, fz["importance_repeats"], fz["seed"],
                                                   self.config.jobs)
        fusion.save_metrics(report, os.path.join(staging, "fusion_metrics.json"), n_train=len(train),
                            columns=list(data.column_names))
        fusion.save_importance(importance, os.path.join(staging, "importance.csv"))
        fusion.save_predictions(model, test, os.path.join(staging, "fusion_predictions.csv"))
        return StageResult(inputs=self._inputs(self.artifact("user_scores.csv"), self.artifact("features.csv"),
                                               self.artifact("cohort.jsonl"), self.artifact("split.json")),
                           seeds={"fusion": fz["seed"]},
                           summary={"algorithm": model.algorithm, "accuracy": report.accuracy, "auc": report.auc})

    def evaluate(self, staging: str) -> StageResult:
        self._require("chunk_scores.csv", "chunks.jsonl")
        users = self._load_cohort()
        labels = self._labels(users)
        split = self._load_split()
        test_ids = set(split["test"])
        test_labels = {u: labels[u] for u in test_ids if u in labels}
        scores = scorer.import_external_scores(self.artifact("chunk_scores.csv"))
        levels = scorer.evaluate_chunk_and_user_levels([s for s in scores if s.user_id in test_ids], test_labels)
        save_json_file(os.path.join(staging, "eval_metrics.json"),
                       {level: report.to_dict() for level, report in levels.items()})

        chunks = textprep.load_chunks(self.artifact("chunks.jsonl"))
        train_chunks = [c for c in chunks if c.user_id in set(split["train"])]
        test_chunks = [c for c in chunks if c.user_id in test_ids]
        n_train = len({c.user_id for c in train_chunks})
        sizes = [n for n in self.config.get("scorer.learning_curve_sizes") if n in ("all", None) or int(n) <= n_train]
        skipped = len(self.config.get("scorer.learning_curve_sizes")) - len(sizes)
        if skipped:
            self.logger.log_warning("学习曲线规模超过训练用户数，已跳过", skipped=skipped, train_users=n_train)
        seed = self.config.get("scorer.seed")
        curve = scorer.learning_curve(train_chunks, test_chunks, sizes or ["all"], seed, **self._train_kwargs())
        curve.to_csv(os.path.join(staging, "learning_curve.csv"), index=False, lineterminator="\n")
        return StageResult(inputs=self._inputs(self.artifact("chunk_scores.csv"), self.artifact("chunks.jsonl"),
                                               self.artifact("split.json")),
                           seeds={"scorer": seed},
                           summary={"chunk_auc": levels["chunk"].auc, "user_auc": levels["user"].auc})

    def trend(self, staging: str) -> StageResult:
        self._require("trend_scores.csv")
        users = self._load_cohort()
        t = self.config.section("trend")
        start, end = parse_date(t["start"]), parse_date(t["end"])
        options = {"bin_days": t["bin_days"], "trim_fraction": t["trim_fraction"], "window": t["window"],
                   "trim_scope": t["trim_scope"]}
        dated = trend.scores_to_dated(scorer.import_external_scores(self.artifact("trend_scores.csv")), users)

        series: Dict[str, trend.TrendSeries] = {}
        report: Dict[str, Any] = {"group": t["group"]}
        if t["group"] in ("all", "cohort"):
            by_cohort = trend.group_trend(users, dated, "cohort", start, end, **options)
            series.update({f"trend/{group}.csv": s for group, s in by_cohort.items()})
        if t["group"] in ("all", "state"):
            geo = trend.geo_trend(users, dated, set(_as_list(t["states"])), start, end, t["min_users"], **options)
            series.update({f"trend/geo_{state}.csv": s for state, s in geo.series.items()})
            if geo.all_series is not None:
                series[f"trend/geo_{trend.ALL_STATES}.csv"] = geo.all_series
            report.update(excluded_states=geo.excluded, state_user_counts=geo.user_counts)
        AsyncFileManager.write_many({os.path.join(staging, name): trend.series_csv(s) for name, s in series.items()})
        report["series"] = {name: s.metadata for name, s in sorted(series.items())}
        save_json_file(os.path.join(staging, "trend_report.json"), report)
        return StageResult(inputs=self._inputs(self.artifact("trend_scores.csv"), self.artifact("cohort.jsonl")),
                           summary={"series": len(series),
                                    "excluded_states": sorted(report.get("excluded_states", {}))})

    def _pos_provider(self):
        if self.config.get("topics.pos_provider") == "nltk":
            return NltkPosProvider()
        return LexiconPosProvider.from_file(self.config.get("paths.pos_lexicon"))

    def _fit_topics(self, chunks: Sequence[textprep.Chunk], labels: Sequence[Optional[str]], pos,
                    tp: Dict[str, Any]) -> Optional[Tuple[topics.TopicModel, List[Optional[str]]]]:
        """过滤出名词非空的文档后训练一个模型；返回模型与对应的文档标签"""
        docs, kept = [], []
        for doc, label in zip(topics.topic_documents(chunks, pos), labels):
            if doc:
                docs.append(doc)
                kept.append(label)
        if not docs:
            return None
        return topics.fit_lda(docs, tp["K"], tp["alpha"], tp["beta"], tp["iterations"], tp["seed"]), kept

    def topics(self, staging: str) -> StageResult:
        self._require("trend_chunks.jsonl")
        tp = self.config.section("topics")
        pos = self._pos_provider()
        chunks = textprep.load_chunks(self.artifact("trend_chunks.jsonl"))
        reports: Dict[str, str] = {}

        # 时段模型：DP 与 ND 共用一个模型，按分组统计主导主题
        for period, members in topics.split_by_period(chunks, parse_date(tp["split_date"])).items():
            fitted = self._fit_topics(members, [c.label for c in members], pos, tp)
            if fitted is None:
                self.logger.log_warning("该时段没有名词文档，跳过主题建模", period=period)
                continue
            model, labels = fitted
            report = topics.topic_report(model, None, period, tp["top_n"],
                                         topics.dominant_breakdown(model, labels, (DP, ND)))
            report["split_date"] = tp["split_date"]
            reports[os.path.join(staging, f"topics_{period}.json")] = dump_json(report)

        # 分州模型：state_start 到 trend.end 之间所有带地区用户的文本块
        states = _as_list(self.config.get("trend.states"))
        located = {u.user_id: u.state_code for u in self._load_cohort() if u.state_code}
        window = [c for c in topics.chunks_in_window(chunks, parse_date(tp["state_start"]),
                                                      parse_date(self.config.get("trend.end")))
                  if c.user_id in located]
        fitted = self._fit_topics(window, [located[c.user_id] for c in window], pos, tp)
        if fitted is None:
            self.logger.log_warning("分州时间窗内没有名词文档，跳过分州主题建模")
        else:
            model, labels = fitted
            report = topics.topic_report(model, None, "states", tp["top_n"],
                                         topics.dominant_breakdown(model, labels, states, trend.ALL_STATES),
                                         breakdown_name="states")
            report.update(start=tp["state_start"], end=self.config.get("trend.end"))
            reports[os.path.join(staging, "topics_states.json")] = dump_json(report)

        AsyncFileManager.write_many(reports)
        return StageResult(inputs=self._inputs(self.artifact("trend_chunks.jsonl"), self.artifact("cohort.jsonl"),
                                               self.config.get("paths.pos_lexicon")),
                           seeds={"topics": tp["seed"]}, summary={"reports": len(reports)})

    def run_pipeline(self) -> Dict[str, Any]:
        """
        synth/导入 → cohort → chunk → train → score → features → fuse → eval → trend → topics

        所有阶段写入同一个暂存根目录，全部成功后才整体提交；任一阶段失败时整个暂存根目录被删除，
        输出目录中不留下本次运行的任何产物。
        """
        started = time.perf_counter()
        final_dir = self.output_dir
        staging_root = os.path.join(final_dir, ".staging-pipeline")
        shutil.rmtree(staging_root, ignore_errors=True)
        os.makedirs(staging_root)
        self.output_dir = staging_root
        try:
            manifest = self._run_all_stages(started)
        except Exception:
            shutil.rmtree(staging_root, ignore_errors=True)
            self.logger.log_audit("pipeline", False, elapsed=round(time.perf_counter() - started, 3))
            raise
        finally:
            self.output_dir = final_dir
        self._commit(staging_root)
        self.logger.log_audit("pipeline", True, elapsed=round(time.perf_counter() - started, 3),
                              stages=len(manifest["stages"]))
        return manifest

    def _run_all_stages(self, started: float) -> Dict[str, Any]:
        manifests: Dict[str, Dict[str, Any]] = {}
        if self.config.get("paths.corpus"):
            users = load_corpus(self.config.get("paths.corpus"))
            report = validate_corpus(users)
            if report.n_users == 0:
                raise DataValidationError(f"语料为空: {self.config.get('paths.corpus')}")
            self.logger.log_activity("语料已导入", violations=len(report.violations), **corpus_summary(users))
        else:
            manifests["synth"] = self.run("synth")
        for stage in PIPELINE_STAGES:
            if stage == "score" and self.config.get("paths.external_scores"):
                manifests["import-scores"] = self.run("import-scores")
            else:
                manifests[stage] = self.run(stage)
        outputs: Dict[str, str] = {}
        for manifest in manifests.values():
            outputs.update(manifest["outputs"])
        manifest = {
            "tool": "depsignal",
            "version": TOOL_VERSION,
            "subcommand": "pipeline",
            "stages": list(manifests),
            "config": self.config.snapshot(),
            "seeds": {k: v for m in manifests.values() for k, v in m["seeds"].items()},
            "inputs": self._inputs(self.config.get("paths.corpus")),
            "outputs": dict(sorted(outputs.items())),
            "log_summary": self.logger.analyze_logs(),
            "host": host_info(),
            "elapsed": round(time.perf_counter() - started, 3),
            "created_at": get_current_iso_timestamp(),
        }
        save_json_file(self.manifest_path("pipeline"), manifest)
        return manifest


def prepare_run(config: PipelineConfig, subcommand: str) -> PipelineRunner:
    """校验配置并启用文件日志"""
    config.validate(subcommand)
    os.makedirs(config.output_dir, exist_ok=True)
    log = config.section("logging")
    manager = configure_logging(log["logs_dir"] or os.path.join(config.output_dir, "logs"), log["log_level"],
                                log["log_formatter"])
    manager.clear_logs()
    return PipelineRunner(config)


def run_subcommand(name: str, config: PipelineConfig) -> int:
    """执行子命令并返回退出码：0 成功，2 配置错误，3 数据校验错误，4 运行失败"""
    logger = get_logging_manager()
    try:
        prepare_run(config, name).run(name)
        return 0
    except DepSignalError as e:
        logger.log_error(f"{name} 失败", exception=e)
        print(f"错误: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.log_error(f"{name} 运行失败", exception=e)
        print(f"运行失败: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


def load_manifest(path: str) -> Dict[str, Any]:
    if not os.path.isfile(path):
        raise ConfigError(f"清单文件不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except ValueError as e:
        raise ConfigError(f"清单文件无法解析: {path}") from e
    if "config" not in manifest or "subcommand" not in manifest:
        raise ConfigError(f"清单缺少 config 或 subcommand 字段: {path}")
    return manifest


def config_from_manifest(path: str, output_dir: Optional[str] = None) -> PipelineConfig:
    """由清单中的配置快照重建配置（可指定新的输出目录）"""
    manifest = load_manifest(path)
    config = PipelineConfig(settings=manifest["config"])
    if output_dir:
        config.update_settings({"paths": {"output_dir": output_dir}})
    return config


def verify_outputs(manifest: Dict[str, Any], output_dir: str) -> Dict[str, Dict[str, Optional[str]]]:
    """比较清单记录的产物哈希与输出目录中的实际哈希，返回不一致项"""
    mismatches = {}
    for relative, expected in manifest.get("outputs", {}).items():
        actual = compute_file_hash(os.path.join(output_dir, relative))
        if actual != expected:
            mismatches[relative] = {"expected": expected, "actual": actual}
    return mismatches
