"""Staged clean -> extract -> summarize -> evaluate -> report runs.

Every stage reads the previous stage's per-document JSON artifacts from the
run directory and writes its own, so stages can be rerun in isolation::

    runs/<run_id>/
        manifest.json
        01_clean/<doc>.json
        02_extract/<doc>.json
        03_summarize/<doc>.json, <doc>.transcript.jsonl
        04_metrics/<doc>.json
        05_report/report.csv, report.md
"""

from __future__ import annotations

import csv
import io
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

from .abstract import (
    FinalSummary,
    HTTPChatClient,
    MockChatClient,
    PromptTemplate,
    rewrite_summary,
    summarize_document,
    write_transcript,
)
from .cleaning import CATEGORIES, CleanConfig, CleanDocument, RawText, ingest
from .embed import (
    HashingSentenceEmbedder,
    HashingTokenEmbedder,
    LexicalMaskedPredictor,
    RemoteSentenceEmbedder,
    WindowedTokenEmbedder,
)
from .exceptions import ConfigError, ProviderError, StageError, SummarizationError, SumpipeError
from .extract import ExtractionConfig, ExtractiveSummary, extract
from .metrics import METRIC_COLUMNS, MetricReport, Providers, aggregate, score_pair
from .segment import load_abbreviations

logger = logging.getLogger(__name__)

__all__ = [
    "RECIPES",
    "STAGES",
    "PipelineConfig",
    "Run",
    "StageResult",
    "load_config",
    "build_providers",
    "render_report_csv",
    "render_report_markdown",
]

RECIPES = {
    "A25": {"target_sentences": 25, "task": "summarize", "rewrite": False},
    "S100_25": {"target_sentences": 100, "task": "summarize", "rewrite": False},
    "R100_25": {"target_sentences": 100, "task": "summarize", "rewrite": True},
    "SR100_25": {"target_sentences": 100, "task": "summarize_rewrite", "rewrite": False},
}
STAGES = ("clean", "extract", "summarize", "evaluate", "report")
STAGE_DIRS = {
    "clean": "01_clean",
    "extract": "02_extract",
    "summarize": "03_summarize",
    "evaluate": "04_metrics",
    "report": "05_report",
}


@dataclass
class ExtractionSettings:
    boundary_alpha: float = 0.5
    block_keep_ratio: float = 0.6
    sentence_keep_ratio: float = 0.6
    target_sentences: int | None = None


@dataclass
class AbstractionSettings:
    target_sentences: int = 25
    max_words: int = 1500
    token_budget: int = 4096
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0


@dataclass
class ProviderSettings:
    base_url: str | None = None
    embedding_model: str = "text-embedding-3-small"
    batch_size: int = 64
    max_in_flight: int = 4
    token_embedder: str = "remote"
    masked_predictor: str = "lexical"
    mock: bool = False


@dataclass
class MetricSettings:
    mask_every: int = 6


@dataclass
class PipelineConfig:
    corpus_dir: Path
    run_dir: Path = Path("runs")
    run_id: str = "default"
    recipe: str = "A25"
    workers: int = 2
    abbreviations: Path | None = None
    clean: CleanConfig = field(default_factory=CleanConfig)
    extraction: ExtractionSettings = field(default_factory=ExtractionSettings)
    abstraction: AbstractionSettings = field(default_factory=AbstractionSettings)
    providers: ProviderSettings = field(default_factory=ProviderSettings)
    metrics: MetricSettings = field(default_factory=MetricSettings)

    def __post_init__(self):
        if self.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {self.recipe!r}; expected one of {sorted(RECIPES)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.providers.token_embedder not in ("remote", "mock"):
            raise ConfigError("providers.token_embedder must be 'remote' or 'mock'")
        if self.providers.masked_predictor not in ("lexical", "none"):
            raise ConfigError("providers.masked_predictor must be 'lexical' or 'none'")
        if self.metrics.mask_every < 1:
            raise ConfigError("metrics.mask_every must be >= 1")

    @property
    def run_path(self) -> Path:
        return Path(self.run_dir) / self.run_id

    def extraction_config(self) -> ExtractionConfig:
        k = self.extraction.target_sentences or RECIPES[self.recipe]["target_sentences"]
        return ExtractionConfig(self.extraction.boundary_alpha, self.extraction.block_keep_ratio,
                                self.extraction.sentence_keep_ratio, k)

    def prompt_template(self) -> PromptTemplate:
        return PromptTemplate(RECIPES[self.recipe]["task"], self.abstraction.target_sentences)

    def snapshot(self) -> dict:
        data = asdict(self)
        for key in ("corpus_dir", "run_dir", "abbreviations"):
            data[key] = None if data[key] is None else str(data[key])
        return data


def _build_section(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def load_config(path) -> PipelineConfig:
    """Read a JSON config; relative paths resolve against the config file's directory."""
    path = Path(path)
    try:
        data = json.loads(path.read_text("utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "corpus_dir" not in data:
        raise ConfigError("config is missing 'corpus_dir'")
    sections = {
        "clean": CleanConfig,
        "extraction": ExtractionSettings,
        "abstraction": AbstractionSettings,
        "providers": ProviderSettings,
        "metrics": MetricSettings,
    }
    data = dict(data)
    for key, cls in sections.items():
        if key in data:
            data[key] = _build_section(cls, data[key], key)
    base = path.resolve().parent
    for key in ("corpus_dir", "run_dir", "abbreviations"):
        if data.get(key) is not None:
            data[key] = base / data[key]
    if "run_dir" not in data:
        data["run_dir"] = base / "runs"
    cfg = _build_section(PipelineConfig, data, "config")
    cfg.clean.compiled_patterns()
    return cfg


@dataclass
class CorpusEntry:
    id: str
    category: str
    text: Path
    reference: Path | None = None


def load_corpus(corpus_dir) -> list[CorpusEntry]:
    """Documents listed in ``index.json``, or every ``*.txt`` (``<id>.ref.txt`` is a reference)."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise ConfigError(f"corpus_dir {corpus_dir} does not exist")
    index = corpus_dir / "index.json"
    entries = []
    if index.exists():
        for item in json.loads(index.read_text("utf-8"))["documents"]:
            category = item.get("category", "other")
            if category not in CATEGORIES:
                raise ConfigError(f"document {item['id']!r} has unknown category {category!r}")
            ref = item.get("reference")
            entries.append(CorpusEntry(item["id"], category, corpus_dir / item["text"],
                                       corpus_dir / ref if ref else None))
    else:
        for path in sorted(corpus_dir.glob("*.txt")):
            if path.name.endswith(".ref.txt"):
                continue
            ref = path.with_name(path.stem + ".ref.txt")
            entries.append(CorpusEntry(path.stem, "other", path, ref if ref.exists() else None))
    return entries


def build_providers(cfg: PipelineConfig, mock: bool = False) -> dict:
    """Sentence embedder, token embedder, masked predictor and chat client for a run."""
    mock = mock or cfg.providers.mock
    p = cfg.providers
    if mock:
        sentence = HashingSentenceEmbedder()
        chat = MockChatClient()
    else:
        sentence = RemoteSentenceEmbedder(p.embedding_model, p.base_url, batch_size=p.batch_size,
                                          max_in_flight=p.max_in_flight)
        a = cfg.abstraction
        chat = HTTPChatClient(a.model, p.base_url, temperature=a.temperature,
                              max_retries=a.max_retries, timeout=a.timeout)
    if mock or p.token_embedder == "mock":
        token = HashingTokenEmbedder()
    else:
        token = WindowedTokenEmbedder(sentence)
    masked = LexicalMaskedPredictor() if mock or p.masked_predictor == "lexical" else None
    return {"sentence_embedder": sentence, "token_embedder": token,
            "masked_predictor": masked, "chat": chat}


@dataclass
class StageResult:
    stage: str
    ok: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    provider_failures: int = 0

    @property
    def exit_code(self) -> int:
        if not self.failed:
            return 0
        if not self.ok and not self.skipped and self.provider_failures == len(self.failed):
            return 3
        return 4


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _dump_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n", "utf-8")


def _fmt(value) -> str:
    return "" if value is None else f"{value:.4f}"


REPORT_HEADER = ["row", "category", "system", "n", *METRIC_COLUMNS]
_REFERENCE_BASED = ("rouge1", "rouge2", "rougeL", "bertscore_f1", "words_summary")
_REFERENCE_FREE = ("blanc_help", "blanc_tune", "estime_alarms", "estime_soft", "words_summary")
_TITLES = {
    "rouge1": "ROUGE-1", "rouge2": "ROUGE-2", "rougeL": "ROUGE-L", "bertscore_f1": "BERTScore",
    "blanc_help": "BLANC help", "blanc_tune": "BLANC tune", "estime_alarms": "ESTIME alarms",
    "estime_soft": "ESTIME soft", "words_summary": "Words",
}


def _table_rows(rows):
    for row in rows:
        for kind, values in (("Avg", row.mean), ("Std", row.std)):
            yield f"{kind} ({row.label})", row, values


def render_report_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(REPORT_HEADER)
    for label, row, values in _table_rows(rows):
        writer.writerow([label, row.category, row.system, row.count, *(_fmt(values[c]) for c in METRIC_COLUMNS)])
    return buf.getvalue()


def render_report_markdown(rows) -> str:
    out = []
    for title, columns in (("Reference-based metrics", _REFERENCE_BASED),
                           ("Reference-free metrics", _REFERENCE_FREE)):
        header = ["Row", "System", "N", *(_TITLES[c] for c in columns)]
        out.append(f"## {title}\n")
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "|".join(["---"] * len(header)) + "|")
        for label, row, values in _table_rows(rows):
            cells = [label, row.system, str(row.count), *(_fmt(values[c]) for c in columns)]
            out.append("| " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


class Run:
    """One run directory plus its manifest.

    ``providers`` maps the names returned by :func:`build_providers`; pass
    ``mock=True`` to use the offline mocks.
    """

    def __init__(self, cfg: PipelineConfig, mock: bool = False, providers: dict | None = None,
                 docs=None, resume: bool = False):
        self.cfg = cfg
        self.mock = mock or cfg.providers.mock
        self._providers = providers
        self.resume = resume
        self.root = cfg.run_path
        self.abbreviations = load_abbreviations(cfg.abbreviations)
        corpus = load_corpus(cfg.corpus_dir)
        if docs:
            wanted = set(docs)
            missing = wanted - {e.id for e in corpus}
            if missing:
                raise ConfigError(f"unknown document id(s): {', '.join(sorted(missing))}")
            corpus = [e for e in corpus if e.id in wanted]
        self.corpus = corpus
        self._lock = threading.Lock()
        self.manifest = self._load_manifest()

    @property
    def providers(self) -> dict:
        if self._providers is None:
            self._providers = build_providers(self.cfg, self.mock)
        return self._providers

    # manifest -----------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            manifest = json.loads(self.manifest_path.read_text("utf-8"))
        else:
            manifest = {"run_id": self.cfg.run_id, "created": _now(), "documents": {}, "report": None}
        manifest["config"] = self.cfg.snapshot()
        recipe = RECIPES[self.cfg.recipe]
        manifest["recipe"] = {"name": self.cfg.recipe, "extraction_k": self.cfg.extraction_config().target_sentences,
                              "task": recipe["task"], "rewrite": recipe["rewrite"],
                              "target_sentences": self.cfg.abstraction.target_sentences}
        manifest["mock_providers"] = self.mock
        return manifest

    def _record(self, doc_id, stage, status, artifacts=(), error=None):
        entry = {"status": status, "artifacts": sorted(artifacts), "timestamp": _now()}
        if error:
            entry["error"] = error
        with self._lock:
            self.manifest["documents"].setdefault(doc_id, {})[stage] = entry

    def _save_manifest(self):
        with self._lock:
            self.manifest["updated"] = _now()
            self.manifest["providers"] = self._provider_names()
            _dump_json(self.manifest_path, self.manifest)

    def _provider_names(self) -> dict:
        if self._providers is None:
            return self.manifest.get("providers", {})
        p = self._providers
        return {
            "sentence_embedder": p["sentence_embedder"].name,
            "token_embedder": p["token_embedder"].name,
            "masked_predictor": p["masked_predictor"].name if p["masked_predictor"] else None,
            "chat_model": p["chat"].model,
        }

    def artifacts(self) -> list[str]:
        """Every artifact path referenced by the manifest."""
        paths = []
        for stages in self.manifest["documents"].values():
            for entry in stages.values():
                paths.extend(entry["artifacts"])
        if self.manifest.get("report"):
            paths.extend(self.manifest["report"]["artifacts"])
        return paths

    # helpers ------------------------------------------------------------

    def _path(self, stage, name) -> Path:
        return self.root / STAGE_DIRS[stage] / name

    def _rel(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

    def _require(self, stage, doc_id, needed_stage) -> Path:
        path = self._path(needed_stage, f"{doc_id}.json")
        if not path.exists():
            raise StageError(f"{stage} needs {self._rel(path)}; run `sumpipe {needed_stage}` first")
        return path

    def _can_skip(self, doc_id, stage) -> bool:
        if not self.resume:
            return False
        entry = self.manifest["documents"].get(doc_id, {}).get(stage)
        return bool(entry and entry["status"] == "ok"
                    and all((self.root / a).exists() for a in entry["artifacts"]))

    def _run_stage(self, stage, work) -> StageResult:
        result = StageResult(stage)
        if stage != "clean":
            previous = STAGES[STAGES.index(stage) - 1]
            for entry in self.corpus:
                self._require(stage, entry.id, previous)

        def one(entry):
            if self._can_skip(entry.id, stage):
                return entry.id, "skipped", None, False
            try:
                artifacts = work(entry)
            except ProviderError as exc:
                self._record(entry.id, stage, "failed", getattr(exc, "artifacts", ()), str(exc))
                return entry.id, "failed", str(exc), True
            except SummarizationError as exc:
                self._record(entry.id, stage, "failed", getattr(exc, "artifacts", ()), str(exc))
                return entry.id, "failed", str(exc), isinstance(exc.__cause__, ProviderError)
            except SumpipeError as exc:
                self._record(entry.id, stage, "failed", (), str(exc))
                return entry.id, "failed", str(exc), False
            self._record(entry.id, stage, "ok", [self._rel(p) for p in artifacts])
            return entry.id, "ok", None, False

        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            outcomes = list(pool.map(one, self.corpus))
        for doc_id, status, error, provider in outcomes:
            if status == "ok":
                result.ok.append(doc_id)
            elif status == "skipped":
                result.skipped.append(doc_id)
            else:
                result.failed[doc_id] = error
                result.provider_failures += provider
                logger.error("%s failed for %s: %s", stage, doc_id, error)
        self._save_manifest()
        return result

    # stages -------------------------------------------------------------

    def clean(self) -> StageResult:
        def work(entry):
            raw = RawText.from_string(entry.text.read_text("utf-8"), entry.id)
            doc = ingest(raw, self.cfg.clean, entry.category, self.abbreviations)
            path = self._path("clean", f"{entry.id}.json")
            _dump_json(path, doc.to_dict())
            return [path]
        return self._run_stage("clean", work)

    def extract(self) -> StageResult:
        ecfg = self.cfg.extraction_config()
        embedder = self.providers["sentence_embedder"]

        def work(entry):
            doc = CleanDocument.from_dict(json.loads(self._path("clean", f"{entry.id}.json").read_text("utf-8")))
            summary = extract(doc, embedder, ecfg, self.abbreviations)
            path = self._path("extract", f"{entry.id}.json")
            _dump_json(path, summary.to_dict())
            return [path]
        return self._run_stage("extract", work)

    def summarize(self) -> StageResult:
        template = self.cfg.prompt_template()
        rewrite = RECIPES[self.cfg.recipe]["rewrite"]
        a = self.cfg.abstraction
        client = self.providers["chat"]

        def work(entry):
            data = json.loads(self._path("extract", f"{entry.id}.json").read_text("utf-8"))
            summary = ExtractiveSummary.from_dict(data)
            transcript_path = self._path("summarize", f"{entry.id}.transcript.jsonl")
            transcript_path.parent.mkdir(parents=True, exist_ok=True)
            try:
                final = summarize_document(client, summary, template, a.max_words, a.token_budget)
                if rewrite:
                    final = rewrite_summary(client, final)
            except SummarizationError as exc:
                write_transcript(transcript_path, exc.transcript)
                exc.artifacts = [self._rel(transcript_path)]
                raise
            write_transcript(transcript_path, final.transcript)
            path = self._path("summarize", f"{entry.id}.json")
            _dump_json(path, final.to_dict())
            return [path, transcript_path]
        return self._run_stage("summarize", work)

    def evaluate(self) -> StageResult:
        providers = Providers(self.providers["token_embedder"], self.providers["masked_predictor"])
        mask_every = self.cfg.metrics.mask_every

        def work(entry):
            doc = CleanDocument.from_dict(json.loads(self._path("clean", f"{entry.id}.json").read_text("utf-8")))
            extractive = json.loads(self._path("extract", f"{entry.id}.json").read_text("utf-8"))["text"]
            final_path = self._path("summarize", f"{entry.id}.json")
            final = FinalSummary.from_dict(json.loads(final_path.read_text("utf-8"))).text
            reference = entry.reference.read_text("utf-8").strip() if entry.reference else None
            reports = []
            if reference:
                reports.append(score_pair(doc, None, reference, providers, "human", mask_every=mask_every))
            reports.append(score_pair(doc, reference, extractive, providers, "c2f_far", mask_every=mask_every))
            reports.append(score_pair(doc, reference, final, providers, "chatgpt", mask_every=mask_every))
            path = self._path("evaluate", f"{entry.id}.json")
            _dump_json(path, {"source_id": entry.id, "reports": [r.to_dict() for r in reports]})
            return [path]
        return self._run_stage("evaluate", work)

    def report(self) -> StageResult:
        reports = []
        metrics_dir = self.root / STAGE_DIRS["evaluate"]
        for entry in self.corpus:
            path = metrics_dir / f"{entry.id}.json"
            if path.exists():
                reports.extend(MetricReport.from_dict(r) for r in json.loads(path.read_text("utf-8"))["reports"])
        rows = aggregate(reports)
        csv_path = self._path("report", "report.csv")
        md_path = self._path("report", "report.md")
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_bytes(render_report_csv(rows).encode("utf-8"))
        md_path.write_text(render_report_markdown(rows), "utf-8")
        with self._lock:
            self.manifest["report"] = {"status": "ok", "timestamp": _now(),
                                       "artifacts": [self._rel(csv_path), self._rel(md_path)]}
        self._save_manifest()
        return StageResult("report", ok=[e.id for e in self.corpus])

    def run_all(self) -> list[StageResult]:
        results = []
        for stage in STAGES:
            result = getattr(self, stage)()
            results.append(result)
            if result.failed and stage != "report":
                # downstream stages would stop on the missing artifacts anyway
                done = set(result.ok) | set(result.skipped)
                self.corpus = [e for e in self.corpus if e.id in done]
                if not self.corpus:
                    break
        return results

