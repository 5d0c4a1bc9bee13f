"""Scoring predicted frames against reference frames.

A *semantic item* is either the dialogue act or one slot-value pair,
compared by exact equality after lowercasing.  Precision, recall and F1
are micro-averaged over items across all turns.  Joint accuracy is the
mean over output heads (the act head plus one presence head per slot) of
per-head classification accuracy.

The item cross-entropy (ICE) measures the quality of the confidence
distribution: with c the confidence assigned to an item and d the
indicator that the item is in the reference,

    ICE = (1/N) * sum over turns and items of -log(d*c + (1-d)*(1-c))

where N is the total number of reference items.  Items mentioned by
neither side contribute -log(1) = 0 and are skipped.  The probability
assigned to the truth is floored at 1e-6 before the log, which bounds a
single item's contribution at about 13.8 instead of infinity while
leaving exact predictions at exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .data import ReferenceFrame, Turn
from .decoder import SemanticFrame
from .errors import DomainError
from .ontology import Ontology

PROB_FLOOR = 1e-6

FULL = "full"
STEP1 = "step1"

Item = tuple


def act_item(label: str) -> Item:
    return ("act", label.lower())


def slot_item(slot: str) -> Item:
    return ("slot", slot.lower())


def slot_value_item(slot: str, value: str) -> Item:
    return ("slot", slot.lower(), value.lower())


def reference_items(reference: ReferenceFrame, mode: str = FULL) -> frozenset[Item]:
    items = {act_item(reference.act_pattern)}
    if mode == STEP1:
        items.update(slot_item(s) for s, _ in reference.pairs)
    else:
        items.update(slot_value_item(s, v) for s, v in reference.pairs)
    return frozenset(items)


def frame_items(frame: SemanticFrame, mode: str = FULL) -> frozenset[Item]:
    items = {act_item(frame.act)}
    for pred in frame.slots:
        if mode == STEP1 or pred.value is None:
            items.add(slot_item(pred.slot))
        else:
            items.add(slot_value_item(pred.slot, pred.value))
    return frozenset(items)


def frame_scored_items(frame: SemanticFrame, mode: str = FULL) -> dict[Item, float]:
    scored = {act_item(frame.act): frame.act_confidence}
    for pred in frame.slots:
        if mode == STEP1 or pred.value is None:
            scored[slot_item(pred.slot)] = pred.confidence
        else:
            scored[slot_value_item(pred.slot, pred.value)] = pred.confidence
    return scored


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def item_counts(predicted: Sequence[Iterable[Item]], reference: Sequence[Iterable[Item]]) -> Counts:
    """Micro-aggregated exact-match counts over aligned turn lists."""
    if len(predicted) != len(reference):
        raise DomainError(f"prediction/reference length mismatch: {len(predicted)} vs {len(reference)}")
    tp = fp = fn = 0
    for pred, ref in zip(predicted, reference):
        pred, ref = set(pred), set(ref)
        tp += len(pred & ref)
        fp += len(pred - ref)
        fn += len(ref - pred)
    return Counts(tp, fp, fn)


def prf1(counts: Counts) -> tuple[float, float, float]:
    """Precision, recall and F1; vacuous sides count as perfect."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 1.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def joint_accuracy(
    frames: Sequence[SemanticFrame], references: Sequence[ReferenceFrame], slots: Sequence[str]
) -> float:
    """Mean per-head accuracy: the act head plus one presence head per slot."""
    if len(frames) != len(references):
        raise DomainError(f"prediction/reference length mismatch: {len(frames)} vs {len(references)}")
    if not frames:
        raise DomainError("joint accuracy is undefined with no turns")
    act_hits = 0
    slot_hits = {slot: 0 for slot in slots}
    for frame, ref in zip(frames, references):
        if frame.act.lower() == ref.act_pattern.lower():
            act_hits += 1
        predicted = {p.slot for p in frame.slots}
        referenced = {s for s, _ in ref.pairs}
        for slot in slots:
            if (slot in predicted) == (slot in referenced):
                slot_hits[slot] += 1
    n = len(frames)
    head_accuracies = [act_hits / n] + [slot_hits[s] / n for s in slots]
    return sum(head_accuracies) / len(head_accuracies)


def ice(
    scored: Sequence[Mapping[Item, float]], reference: Sequence[Iterable[Item]], floor: float = PROB_FLOOR
) -> float:
    """Item cross-entropy of hypothesized confidences against references."""
    if len(scored) != len(reference):
        raise DomainError(f"prediction/reference length mismatch: {len(scored)} vs {len(reference)}")
    total_refs = sum(len(set(r)) for r in reference)
    if total_refs == 0:
        raise DomainError("ICE is undefined: no reference items")
    total = 0.0
    for hyp, ref in zip(scored, reference):
        ref = set(ref)
        for item in set(hyp) | ref:
            confidence = float(hyp.get(item, 0.0))
            assigned_to_truth = confidence if item in ref else 1.0 - confidence
            total += -math.log(min(max(assigned_to_truth, floor), 1.0))
    return total / total_refs


@dataclass(frozen=True)
class SlotScores:
    counts: Counts
    precision: float
    recall: float
    f1: float
    ice: float | None


@dataclass(frozen=True)
class ScoreReport:
    """Everything one evaluation produces, plus per-slot breakdowns."""

    mode: str
    turns: int
    counts: Counts
    accuracy: float
    precision: float
    recall: float
    f1: float
    ice: float
    per_slot: Mapping[str, SlotScores] = field(default_factory=dict)
    out_of_ontology: int = 0


def _slot_of(item: Item) -> str | None:
    return item[1] if item[0] == "slot" else None


def score_frames(
    frames: Sequence[SemanticFrame],
    turns: Sequence[Turn],
    ontology: Ontology,
    mode: str = FULL,
) -> ScoreReport:
    """Score decoded frames against the reference frames of ``turns``."""
    if mode not in (FULL, STEP1):
        raise DomainError(f"unknown scoring mode {mode!r}")
    if len(frames) != len(turns):
        raise DomainError(f"prediction/reference length mismatch: {len(frames)} vs {len(turns)}")
    references = [t.reference for t in turns]
    pred_sets = [frame_items(f, mode) for f in frames]
    ref_sets = [reference_items(r, mode) for r in references]
    scored = [frame_scored_items(f, mode) for f in frames]

    counts = item_counts(pred_sets, ref_sets)
    precision, recall, f1 = prf1(counts)
    accuracy = joint_accuracy(frames, references, ontology.slots)
    overall_ice = ice(scored, ref_sets)

    known_acts = set(ontology.acts)
    known_values = {s: set(v) for s, v in ontology.values.items()}
    out_of_ontology = 0
    for ref in references:
        if ref.act_pattern not in known_acts:
            out_of_ontology += 1
        for slot, value in ref.pairs:
            if slot not in known_values or value not in known_values[slot]:
                out_of_ontology += 1

    per_slot: dict[str, SlotScores] = {}
    for slot in ontology.slots:
        key = slot.lower()
        slot_preds = [{i for i in s if _slot_of(i) == key} for s in pred_sets]
        slot_refs = [{i for i in s if _slot_of(i) == key} for s in ref_sets]
        slot_counts = item_counts(slot_preds, slot_refs)
        p, r, f = prf1(slot_counts)
        slot_scored = [{i: c for i, c in s.items() if _slot_of(i) == key} for s in scored]
        try:
            slot_ice = ice(slot_scored, slot_refs)
        except DomainError:
            slot_ice = None
        per_slot[slot] = SlotScores(slot_counts, p, r, f, slot_ice)

    return ScoreReport(
        mode=mode,
        turns=len(frames),
        counts=counts,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        ice=overall_ice,
        per_slot=per_slot,
        out_of_ontology=out_of_ontology,
    )


def report_table(report: ScoreReport) -> list[tuple[str, float]]:
    """Flat (metric, value) rows for machine consumption."""
    rows = [
        ("turns", float(report.turns)),
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
        ("ice", report.ice),
        ("tp", float(report.counts.tp)),
        ("fp", float(report.counts.fp)),
        ("fn", float(report.counts.fn)),
        ("reference_items", float(report.counts.tp + report.counts.fn)),
        ("out_of_ontology", float(report.out_of_ontology)),
    ]
    for slot, scores in report.per_slot.items():
        rows.append((f"slot.{slot}.precision", scores.precision))
        rows.append((f"slot.{slot}.recall", scores.recall))
        rows.append((f"slot.{slot}.f1", scores.f1))
        if scores.ice is not None:
            rows.append((f"slot.{slot}.ice", scores.ice))
    return rows


def report_text(report: ScoreReport) -> str:
    lines = [
        f"mode: {report.mode}",
        f"turns: {report.turns}",
        f"items: tp={report.counts.tp} fp={report.counts.fp} fn={report.counts.fn}",
        f"accuracy:  {report.accuracy:.4f}",
        f"precision: {report.precision:.4f}",
        f"recall:    {report.recall:.4f}",
        f"f1:        {report.f1:.4f}",
        f"ice:       {report.ice:.4f}",
        f"reference items outside the model ontology: {report.out_of_ontology}",
    ]
    if report.per_slot:
        lines.append("per-slot breakdown:")
        for slot, scores in report.per_slot.items():
            ice_part = f" ice={scores.ice:.4f}" if scores.ice is not None else ""
            lines.append(
                f"  {slot}: p={scores.precision:.4f} r={scores.recall:.4f} f1={scores.f1:.4f}{ice_part}"
            )
    return "\n".join(lines) + "\n"
