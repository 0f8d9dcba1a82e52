"""Regenerate tests/goldens/metric_reports.json from the plain-Python oracles."""

import json
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

from oracles import metrics as m  # noqa: E402
from sumpipe.segment import tokenize  # noqa: E402


def main():
    triples = json.loads((HERE.parent / "fixtures" / "metric_triples.json").read_text())
    out = []
    for t in triples:
        cand, ref = tokenize(t["system"]), tokenize(t["reference"])
        alarms, soft = m.estime(t["document"], t["system"])
        out.append({
            "source_id": t["source_id"],
            "rouge1": m.rouge_n(cand, ref, 1),
            "rouge2": m.rouge_n(cand, ref, 2),
            "rougeL": m.rouge_l(cand, ref),
            "bertscore_f1": m.bertscore(cand, ref),
            "blanc_help": m.blanc(t["document"], t["system"]),
            "estime_alarms": alarms,
            "estime_soft": soft,
            "words_summary": len(t["system"].split()),
        })
    path = HERE.parent / "goldens" / "metric_reports.json"
    path.parent.mkdir(exist_ok=True)
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
