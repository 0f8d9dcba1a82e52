import csv
import io
import json
import shutil

import pytest

from sumpipe.abstract import MockChatClient, read_transcript
from sumpipe.cli import main
from sumpipe.embed import HashingSentenceEmbedder, HashingTokenEmbedder, LexicalMaskedPredictor
from sumpipe.exceptions import ConfigError, ProviderError, StageError
from sumpipe.metrics import aggregate
from sumpipe.pipeline import (
    REPORT_HEADER, STAGE_DIRS, Run, load_config, load_corpus, render_report_csv, render_report_markdown,
)

TOPICS = {
    "alpha": ("Retail", "sales", "stores", "shoppers"),
    "beta": ("Freight", "ports", "containers", "shipping"),
    "gamma": ("Bank", "rates", "loans", "inflation"),
}


def write_doc(path, topic, n):
    head, *words = TOPICS[topic]
    lines = ["QUARTERLY NOTES", f"Page 1 of {n}"]
    for i in range(n):
        lines.append(f"{head} figures showed {words[i % 3]} moving in week {i}")
        lines.append(f"while {words[(i + 1) % 3]} stayed close to the average level.")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def project(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    docs = []
    for name, n in (("alpha", 40), ("beta", 30), ("gamma", 12)):
        write_doc(corpus / f"{name}.txt", name, n)
        (corpus / f"{name}.ref.txt").write_text(f"{TOPICS[name][0]} figures moved. Levels stayed near average.\n")
        docs.append({"id": name, "category": "book" if name == "alpha" else "business_article",
                     "text": f"{name}.txt", "reference": f"{name}.ref.txt"})
    (corpus / "index.json").write_text(json.dumps({"documents": docs}))
    config = {
        "corpus_dir": "corpus", "run_dir": "runs", "run_id": "t", "recipe": "A25",
        "clean": {"strip_patterns": ["^[A-Z][A-Z ]+$", r"^Page \d+ of \d+$"]},
        "extraction": {"target_sentences": 8},
        "abstraction": {"target_sentences": 5},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def edit_config(path, **changes):
    data = json.loads(path.read_text())
    data.update(changes)
    path.write_text(json.dumps(data))


def snapshot_files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


def run_dir(config):
    return config.parent / "runs" / "t"


# configuration

def test_load_config_resolves_paths(project):
    cfg = load_config(project)
    assert cfg.corpus_dir == project.parent / "corpus"
    assert cfg.extraction_config().target_sentences == 8
    assert cfg.clean.window == 5


@pytest.mark.parametrize("change", [
    {"colour": "blue"},
    {"clean": {"strip_patterns": [], "windw": 3}},
    {"providers": {"endpoint": "x"}},
    {"recipe": "X9"},
    {"clean": {"strip_patterns": ["("]}},
])
def test_config_errors(project, change, capsys):
    edit_config(project, **change)
    with pytest.raises(ConfigError):
        load_config(project)
    assert main(["run", "--config", str(project), "--mock-providers"]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["clean", "--config", str(tmp_path / "nope.json")]) == 2


def test_corpus_without_index(tmp_path):
    write_doc(tmp_path / "one.txt", "alpha", 3)
    (tmp_path / "one.ref.txt").write_text("Ref.")
    write_doc(tmp_path / "two.txt", "beta", 3)
    entries = load_corpus(tmp_path)
    assert [(e.id, e.reference is not None) for e in entries] == [("one", True), ("two", False)]


# stages

def test_full_run_layout_and_manifest(project, capsys):
    assert main(["run", "--config", str(project), "--mock-providers"]) == 0
    root = run_dir(project)
    for sub in STAGE_DIRS.values():
        assert (root / sub).is_dir()
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["mock_providers"] is True
    assert manifest["providers"]["sentence_embedder"] == HashingSentenceEmbedder().name
    assert manifest["recipe"]["extraction_k"] == 8
    for doc in ("alpha", "beta", "gamma"):
        assert set(manifest["documents"][doc]) == {"clean", "extract", "summarize", "evaluate"}
    run = Run(load_config(project), mock=True)
    listed = run.artifacts()
    assert len(listed) == len(set(listed))
    assert sorted(listed) == sorted(snapshot_files(root))
    assert "run directory" in capsys.readouterr().out


def test_rerun_is_byte_identical(project):
    main(["run", "--config", str(project), "--mock-providers"])
    first = snapshot_files(run_dir(project))
    main(["run", "--config", str(project), "--mock-providers"])
    assert snapshot_files(run_dir(project)) == first


def test_stage_isolation(project):
    main(["run", "--config", str(project), "--mock-providers"])
    root = run_dir(project)
    before = snapshot_files(root)
    for stage in ("extract", "summarize", "evaluate"):
        shutil.rmtree(root / STAGE_DIRS[stage])
        assert main([stage, "--config", str(project), "--mock-providers"]) == 0
    assert snapshot_files(root) == before


def test_missing_predecessor_names_stage(project, capsys):
    assert main(["extract", "--config", str(project), "--mock-providers"]) == 2
    err = capsys.readouterr().err
    assert "01_clean" in err and "sumpipe clean" in err
    run = Run(load_config(project), mock=True)
    with pytest.raises(StageError):
        run.evaluate()


def test_report_with_no_metrics_is_header_only(project):
    assert main(["report", "--config", str(project)]) == 0
    root = run_dir(project) / STAGE_DIRS["report"]
    assert (root / "report.csv").read_bytes() == (",".join(REPORT_HEADER) + "\r\n").encode()
    md = (root / "report.md").read_text()
    assert md.count("| Row | System | N |") == 2 and "Avg" not in md


def test_resume_skips_done_documents(project, capsys):
    main(["run", "--config", str(project), "--mock-providers"])
    before = snapshot_files(run_dir(project))
    capsys.readouterr()
    assert main(["run", "--config", str(project), "--mock-providers", "--resume"]) == 0
    out = capsys.readouterr().out
    assert "clean: 0 ok, 3 skipped" in out and "evaluate: 0 ok, 3 skipped" in out
    assert snapshot_files(run_dir(project)) == before


def test_docs_subset(project, capsys):
    assert main(["run", "--config", str(project), "--mock-providers", "--docs", "beta"]) == 0
    root = run_dir(project)
    assert [p.name for p in (root / "01_clean").iterdir()] == ["beta.json"]
    assert main(["clean", "--config", str(project), "--docs", "beta,zeta"]) == 2


def test_report_rows_one_avg_and_std_per_group(project):
    main(["run", "--config", str(project), "--mock-providers"])
    rows = list(csv.reader(io.StringIO((run_dir(project) / "05_report" / "report.csv").read_bytes().decode(), newline="")))
    assert rows[0] == REPORT_HEADER
    keys = [(r[0].split()[0], r[1], r[2]) for r in rows[1:]]
    groups = {(c, s) for _, c, s in keys}
    assert groups == {(c, s) for c in ("book", "business_article") for s in ("human", "c2f_far", "chatgpt")}
    for c, s in groups:
        assert [k for k, gc, gs in keys if (gc, gs) == (c, s)] == ["Avg", "Std"]


def test_evaluate_scores_three_systems(project):
    main(["run", "--config", str(project), "--mock-providers"])
    data = json.loads((run_dir(project) / "04_metrics" / "alpha.json").read_text())
    by_system = {r["system"]: r for r in data["reports"]}
    assert set(by_system) == {"human", "c2f_far", "chatgpt"}
    assert by_system["human"]["rouge1"] is None
    assert by_system["c2f_far"]["estime_alarms"] == 0


@pytest.mark.parametrize("recipe, k, last_conversation, last_prompt", [
    ("S100_25", 100, "chunk-", "Please summarize the following text in your own words in about 5 sentences."),
    ("R100_25", 100, "final", "Please rewrite the text in your own words."),
    ("SR100_25", 100, "final", "Please summarize and rewrite the text in your own words in about 5 sentences."),
])
def test_recipes(project, recipe, k, last_conversation, last_prompt):
    edit_config(project, recipe=recipe, extraction={})
    assert main(["run", "--config", str(project), "--mock-providers"]) == 0
    root = run_dir(project)
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["recipe"]["extraction_k"] == k
    for doc, stages in manifest["documents"].items():
        transcript_path = next(a for a in stages["summarize"]["artifacts"] if a.endswith(".jsonl"))
        last = read_transcript(root / transcript_path)[-1]
        assert last["conversation"].startswith(last_conversation)
        assert last["prompt"].startswith(last_prompt + "\n\n")


# failures

class FlakyChat(MockChatClient):
    def __init__(self, fail_for):
        self.fail_for = fail_for

    def complete(self, messages):
        if any(word in messages[-1]["content"] for word in self.fail_for):
            raise ProviderError("chat endpoint unavailable")
        return super().complete(messages)


def providers_with(chat):
    return {"sentence_embedder": HashingSentenceEmbedder(), "token_embedder": HashingTokenEmbedder(),
            "masked_predictor": LexicalMaskedPredictor(), "chat": chat}


def test_partial_provider_failure(project):
    run = Run(load_config(project), providers=providers_with(FlakyChat(["Freight"])))
    run.clean(), run.extract()
    result = run.summarize()
    assert result.failed.keys() == {"beta"} and result.exit_code == 4
    manifest = json.loads(run.manifest_path.read_text())
    assert manifest["documents"]["beta"]["summarize"]["status"] == "failed"
    assert manifest["documents"]["alpha"]["summarize"]["status"] == "ok"
    # the partial transcript is kept and listed
    assert manifest["documents"]["beta"]["summarize"]["artifacts"] == ["03_summarize/beta.transcript.jsonl"]


def test_total_provider_failure_exit_3(project):
    run = Run(load_config(project), providers=providers_with(FlakyChat(["Please"])))
    run.clean(), run.extract()
    assert run.summarize().exit_code == 3


def test_run_all_continues_with_surviving_docs(project):
    run = Run(load_config(project), providers=providers_with(FlakyChat(["Freight"])))
    results = run.run_all()
    assert [r.stage for r in results] == ["clean", "extract", "summarize", "evaluate", "report"]
    assert results[3].ok == ["alpha", "gamma"]
    assert max(r.exit_code for r in results) == 4


def test_empty_document_is_a_partial_failure(project):
    (project.parent / "corpus" / "gamma.txt").write_text("12\n34\n")
    assert main(["run", "--config", str(project), "--mock-providers"]) == 4


def test_render_helpers_roundtrip():
    from sumpipe.metrics import MetricReport, RougeScore

    rows = aggregate([MetricReport("a", "c2f_far", "book", rouge1=RougeScore(0.5, 0.5, 0.5))])
    text = render_report_csv(rows)
    parsed = list(csv.reader(io.StringIO(text, newline="")))
    assert parsed[1][:5] == ["Avg (book)", "book", "c2f_far", "1", "0.5000"]
    assert "| Avg (book) | c2f_far | 1 | 0.5000 |" in render_report_markdown(rows)
