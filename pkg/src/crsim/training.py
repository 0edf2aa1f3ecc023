"""Training: interaction models and the agent-side understanding index from an annotated corpus."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .config import INDEX_FILE, MODEL_FILES, atomic_write
from .corpus import DEFAULT_ALPHA, AnnotatedDialogueCorpus, TransitionModel, estimate, load_dialogues
from .domain import AgentActionKind, Speaker
from .nlg import TemplateBank
from .nlu import LabeledUtteranceIndex


def model_text(model: TransitionModel) -> str:
    return json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n"


def index_records(corpus: AnnotatedDialogueCorpus, bank: TemplateBank | None = None) -> list[tuple[str, str, str]]:
    """Agent templates plus every corpus agent utterance the templates alone misclassify."""
    bank = bank or TemplateBank.load(speaker="AGENT")
    records = [("", kind.label, t.text) for kind, group in bank.templates.items() for t in group]
    base = LabeledUtteranceIndex.from_records(records, Speaker.AGENT)
    seen = set()
    for d in corpus:
        for turn in d.turns:
            if turn.speaker is not Speaker.AGENT or not turn.actions or not turn.utterance:
                continue
            gold = turn.actions[0]
            if not isinstance(gold, AgentActionKind) or base.classify(turn.utterance).kind is gold:
                continue
            key = (turn.utterance, gold.label)
            if key not in seen:
                seen.add(key)
                records.append((turn.utterance, gold.label, ""))
    return records


def index_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["utterance", "label", "template"])
    w.writerows(sorted(records, key=lambda r: (r[1], r[2], r[0])))
    return buf.getvalue()


def train(dialogues: str | Path, out_dir: str | Path, alpha: float = DEFAULT_ALPHA) -> dict:
    """Estimate both interaction models and the agent index, then write them.

    Everything is computed before the first write, so a bad corpus leaves the
    output directory untouched. Returns a summary of what was written.
    """
    corpus = load_dialogues(dialogues)
    models = {kind: estimate(corpus, kind, alpha) for kind in MODEL_FILES}
    records = index_records(corpus)
    texts = {MODEL_FILES[k]: model_text(m) for k, m in models.items()}
    texts[INDEX_FILE] = index_text(records)
    out = Path(out_dir)
    for name, text in texts.items():
        atomic_write(out / name, text)
    summary = {
        "dialogues": len(corpus),
        "user_actions": sum(len(d.user_actions()) for d in corpus),
        "alpha": alpha,
        "index_entries": len(records),
    }
    for kind, m in models.items():
        summary[kind] = {"classes": len(m.classes()),
                         "rows": len(m.conditionals()),
                         "max_length": max(m.lengths)}
    return summary
