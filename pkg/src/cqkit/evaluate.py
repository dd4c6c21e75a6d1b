"""Prediction parsing, filtered MRR, accuracy, and report aggregation.

Generated answers arrive as text; the last ``FINAL: {...}`` block is the
prediction, read as a ranked list in listing order. Only hard answers are
scored. When ranking one hard answer the other hard answers are filtered out
of the list, so listing several correct answers never hurts; every other
listed entity still counts against the rank. Reference outputs therefore
list hard answers first (see ``executor.ordered_final``).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from cqkit.kg import KnowledgeGraph
from cqkit.queries import QUERY_TYPES

AVG_P_TYPES = ("1p", "2p", "3p", "2i", "3i", "pi", "ip", "2u", "up")
AVG_OOD_TYPES = ("pi", "ip", "2u", "up")
AVG_N_TYPES = ("2in", "3in", "inp", "pin", "pni")

_FINAL_RE = re.compile(r"FINAL:\s*\{([^{}]*)\}")


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    raw_text: str
    parsed: tuple[int, ...]
    parse_ok: bool
    unmatched_labels: int = 0


def build_label_index(graph: KnowledgeGraph) -> tuple[dict[str, int], dict[str, int]]:
    """(exact label -> id, lowercase label -> id); first id wins on clashes."""
    exact: dict[str, int] = {}
    lower: dict[str, int] = {}
    for e in sorted(graph.entities):
        label = graph.entity_label(e)
        exact.setdefault(label, e)
        lower.setdefault(label.lower(), e)
    return exact, lower


def parse_prediction(
    sample_id: str,
    raw_text: str,
    label_index: tuple[dict[str, int], dict[str, int]],
) -> Prediction:
    """Extract the last FINAL block; match labels exactly, then
    case-insensitively; drop (and count) anything unmatched."""
    exact, lower = label_index
    matches = _FINAL_RE.findall(raw_text)
    if not matches:
        return Prediction(sample_id, raw_text, (), parse_ok=False)
    items = [part.strip() for part in matches[-1].split(",")]
    parsed: list[int] = []
    seen: set[int] = set()
    unmatched = 0
    for label in items:
        if not label:
            continue
        ident = exact.get(label)
        if ident is None:
            ident = lower.get(label.lower())
        if ident is None:
            unmatched += 1
            continue
        if ident not in seen:
            seen.add(ident)
            parsed.append(ident)
    return Prediction(sample_id, raw_text, tuple(parsed), parse_ok=True, unmatched_labels=unmatched)


def mrr_filtered(pred: Prediction, answers) -> float:
    """Mean reciprocal rank over the hard answers.

    rank(a) = 1 + number of listed entities before ``a`` that are not other
    hard answers; an absent hard answer contributes 0.
    """
    hard = set(answers.hard)
    if not hard:
        raise EvalError("cannot score a query with an empty hard-answer set")
    positions = {e: i for i, e in enumerate(pred.parsed)}
    total = 0.0
    for a in hard:
        idx = positions.get(a)
        if idx is None:
            continue
        rank = 1 + sum(1 for x in pred.parsed[:idx] if x not in hard)
        total += 1.0 / rank
    return total / len(hard)


def mrr_unfiltered(pred: Prediction, answers) -> float:
    """Raw list-position MRR; kept for the filtering-never-hurts check."""
    hard = set(answers.hard)
    if not hard:
        raise EvalError("cannot score a query with an empty hard-answer set")
    positions = {e: i for i, e in enumerate(pred.parsed)}
    return sum(1.0 / (positions[a] + 1) for a in hard if a in positions) / len(hard)


def accuracy(pred: Prediction, answers, exact: bool = False) -> float:
    """Hard-answer recall by default; with ``exact`` the prediction must
    equal the full (easy + hard) answer set."""
    hard = set(answers.hard)
    if not hard:
        raise EvalError("cannot score a query with an empty hard-answer set")
    if exact:
        return 1.0 if set(pred.parsed) == (set(answers.easy) | hard) else 0.0
    return len(set(pred.parsed) & hard) / len(hard)


@dataclass(frozen=True)
class TypeScore:
    mrr: float
    accuracy: float
    count: int
    parse_failures: int


@dataclass(frozen=True)
class EvalReport:
    per_type: dict[str, TypeScore]
    avg_p: float | None
    avg_ood: float | None
    avg_n: float | None
    samples: int = 0
    parse_failures: int = 0
    missing: int = 0
    unknown_ids: tuple[str, ...] = field(default=())

    def to_json(self) -> dict:
        return {
            "per_type": {
                tag: {
                    "mrr": ts.mrr,
                    "accuracy": ts.accuracy,
                    "count": ts.count,
                    "parse_failures": ts.parse_failures,
                }
                for tag, ts in self.per_type.items()
            },
            "avg_p": self.avg_p,
            "avg_ood": self.avg_ood,
            "avg_n": self.avg_n,
            "samples": self.samples,
            "parse_failures": self.parse_failures,
            "missing": self.missing,
            "unknown_ids": list(self.unknown_ids),
        }


def _type_average(per_type: dict[str, TypeScore], tags, metric) -> float | None:
    values = [getattr(per_type[t], metric) for t in tags if t in per_type]
    if not values:
        return None
    return sum(values) / len(values)


def aggregate(
    records: list[tuple[str, float, float, bool]],
    missing: int = 0,
    unknown_ids: tuple[str, ...] = (),
) -> EvalReport:
    """records: (type tag, mrr, accuracy, parse_ok) per scored sample.
    Aggregate columns are unweighted means over per-type means."""
    by_type: dict[str, list[tuple[float, float, bool]]] = {}
    for tag, mrr, acc, ok in records:
        by_type.setdefault(tag, []).append((mrr, acc, ok))
    per_type = {
        tag: TypeScore(
            mrr=sum(r[0] for r in rows) / len(rows),
            accuracy=sum(r[1] for r in rows) / len(rows),
            count=len(rows),
            parse_failures=sum(1 for r in rows if not r[2]),
        )
        for tag, rows in sorted(by_type.items())
    }
    return EvalReport(
        per_type=per_type,
        avg_p=_type_average(per_type, AVG_P_TYPES, "mrr"),
        avg_ood=_type_average(per_type, AVG_OOD_TYPES, "mrr"),
        avg_n=_type_average(per_type, AVG_N_TYPES, "mrr"),
        samples=len(records),
        parse_failures=sum(1 for r in records if not r[3]),
        missing=missing,
        unknown_ids=tuple(unknown_ids),
    )


def display_score(value: float | None) -> str:
    """Scores print as percentages with one decimal, half-up."""
    if value is None:
        return "-"
    return str(Decimal(str(value * 100)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def format_report(report: EvalReport) -> str:
    columns = ["avg_p", "avg_ood", "avg_n", *QUERY_TYPES]
    header = f"{'metric':<10}" + "".join(f"{c:>8}" for c in columns)
    mrr_row = [report.avg_p, report.avg_ood, report.avg_n] + [
        report.per_type[t].mrr if t in report.per_type else None for t in QUERY_TYPES
    ]
    acc_row = [None, None, None] + [
        report.per_type[t].accuracy if t in report.per_type else None for t in QUERY_TYPES
    ]
    lines = [
        header,
        f"{'mrr':<10}" + "".join(f"{display_score(v):>8}" for v in mrr_row),
        f"{'accuracy':<10}" + "".join(f"{display_score(v):>8}" for v in acc_row),
        f"samples={report.samples} parse_failures={report.parse_failures} missing={report.missing}",
    ]
    return "\n".join(lines)


def load_predictions(path: str | Path) -> dict[str, str]:
    """Predictions JSONL: one {"id": ..., "output_text": ...} per line."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if "id" not in row or "output_text" not in row:
                raise EvalError(f"{path}:{lineno}: prediction needs 'id' and 'output_text'")
            out[str(row["id"])] = row["output_text"]
    return out


def evaluate_predictions(
    corpus_rows: list[dict],
    predictions: dict[str, str],
    graph: KnowledgeGraph,
    exact_accuracy: bool = False,
) -> EvalReport:
    """Score predictions against corpus rows that have hard answers (the
    evaluation splits). Missing or unparseable predictions score 0."""
    from cqkit.executor import AnswerSplit

    label_index = build_label_index(graph)
    records: list[tuple[str, float, float, bool]] = []
    missing = 0

    scorable_ids = set()
    for row in corpus_rows:
        if not row["hard_answers"]:
            continue
        scorable_ids.add(row["id"])
        answers = AnswerSplit(tuple(row["easy_answers"]), tuple(row["hard_answers"]))
        text = predictions.get(row["id"])
        if text is None:
            missing += 1
            records.append((row["type"], 0.0, 0.0, False))
            continue
        pred = parse_prediction(row["id"], text, label_index)
        if not pred.parse_ok:
            records.append((row["type"], 0.0, 0.0, False))
            continue
        records.append(
            (
                row["type"],
                mrr_filtered(pred, answers),
                accuracy(pred, answers, exact=exact_accuracy),
                True,
            )
        )
    unknown = tuple(sorted(set(predictions) - scorable_ids))
    return aggregate(records, missing=missing, unknown_ids=unknown)
