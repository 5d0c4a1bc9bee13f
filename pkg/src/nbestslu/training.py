"""Training loops for the joint model and the per-slot value models.

Both steps share the regime: shuffled mini-batches, the Adadelta rule,
dropout on the combined hidden vector, a seeded dialogue-level validation
split, and early stopping on the validation metric (micro item-F1 for the
joint model, value accuracy for slot models).  The returned model carries
the best-on-validation parameters; setting ``patience`` to zero disables
early stopping and keeps the final epoch instead.

Mini-batch gradients are the mean of per-example gradients, so the loss
scale does not depend on the batch size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Sequence

import numpy as np

from . import rng as rng_mod
from .autograd import TRAIN, Tensor, add_n, dropout_apply, nll_loss
from .config import RunConfig
from .data import Dataset, Turn, collect_system_tokens, make_folds
from .decoder import decode_turn, predict_joint, turn_nbest
from .errors import DomainError, NumericFailure
from .metrics import STEP1, frame_items, item_counts, prf1, reference_items, score_frames
from .model import SlotValueModel, StepOneModel
from .optim import Adadelta

LogFn = Callable[[str], None]


@dataclass
class TrainLog:
    """Per-epoch record of one training run."""

    epochs: list[dict] = dataclass_field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    notes: list[str] = dataclass_field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "notes": self.notes,
        }


def _ordered_sessions(turns: Sequence[Turn]) -> list[str]:
    seen: dict[str, None] = {}
    for t in turns:
        seen.setdefault(t.session, None)
    return list(seen)


def _split_turns(
    turns: Sequence[Turn], fraction: float, seed: int, extra: tuple[int, ...] = ()
) -> tuple[list[Turn], list[Turn]]:
    """Seeded dialogue-level split of a turn list; val may be empty."""
    sessions = _ordered_sessions(turns)
    if len(sessions) < 2:
        return list(turns), []
    rng = rng_mod.substream(seed, rng_mod.SPLIT, *extra)
    order = rng.permutation(len(sessions))
    held = max(1, min(len(sessions) - 1, int(round(len(sessions) * fraction))))
    val_sessions = {sessions[int(i)] for i in order[:held]}
    train = [t for t in turns if t.session not in val_sessions]
    val = [t for t in turns if t.session in val_sessions]
    return train, val


def _snapshot(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def _restore(params: dict[str, Tensor], snapshot: dict[str, np.ndarray]) -> None:
    # In-place copy: embedding blocks are shared with the table view.
    for name, p in params.items():
        p.data[...] = snapshot[name]


def step1_f1(model: StepOneModel, turns: Sequence[Turn]) -> float:
    """Micro item-F1 of act plus slot-presence items."""
    frames = [decode_turn(t, model, {}, step1_only=True) for t in turns]
    preds = [frame_items(f, STEP1) for f in frames]
    refs = [reference_items(t.reference, STEP1) for t in turns]
    return prf1(item_counts(preds, refs))[2]


def step1_head_accuracies(model: StepOneModel, turns: Sequence[Turn]) -> dict[str, float]:
    """Per-head accuracy against the model's own training targets."""
    if not turns:
        raise DomainError("no turns to score")
    ontology = model.ontology
    act_hits = 0
    slot_hits = {slot: 0 for slot in ontology.slots}
    for turn in turns:
        joint = predict_joint(model, turn)
        target = ontology.act_index(ontology.act_label(turn.reference.act_pattern))
        if joint.act_index == target:
            act_hits += 1
        referenced = {s for s, _ in turn.reference.pairs}
        for slot in ontology.slots:
            if (joint.slot_presence[slot] > 0.5) == (slot in referenced):
                slot_hits[slot] += 1
    n = len(turns)
    out = {"act": act_hits / n}
    out.update({f"slot:{s}": slot_hits[s] / n for s in ontology.slots})
    return out


def _run_epochs(
    *,
    model,
    params: dict[str, Tensor],
    turns: Sequence[Turn],
    val_turns: Sequence[Turn],
    config: RunConfig,
    example_loss,
    val_metric_fn,
    log_fn: LogFn | None,
    log: TrainLog,
) -> None:
    optimizer = Adadelta(params, config.adadelta_rho, config.adadelta_epsilon)
    shuffle_rng = rng_mod.substream(config.seed, rng_mod.SHUFFLE)
    dropout_rng = rng_mod.substream(config.seed, rng_mod.DROPOUT)
    nbests = [turn_nbest(t) for t in turns]

    early_stopping = config.patience > 0 and len(val_turns) > 0
    if config.patience > 0 and not val_turns:
        log.notes.append("no validation dialogues available; early stopping disabled")
    best_metric = -math.inf
    best_snapshot: dict[str, np.ndarray] | None = None
    epochs_since_best = 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(turns))
        total_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            for j in batch:
                loss = example_loss(model, turns[int(j)], nbests[int(j)], dropout_rng)
                total_loss += loss.item()
                loss.backward()
            optimizer.step(len(batch))
        mean_loss = total_loss / len(turns)
        if not math.isfinite(mean_loss):
            raise NumericFailure(f"training loss became non-finite at epoch {epoch}")

        val_metric = val_metric_fn(model, val_turns) if val_turns else float("nan")
        log.epochs.append({"epoch": epoch, "loss": mean_loss, "val_metric": val_metric})
        if log_fn:
            shown = f"{val_metric:.4f}" if not math.isnan(val_metric) else "n/a"
            log_fn(f"epoch {epoch}: loss {mean_loss:.4f} val {shown}")

        if early_stopping:
            if val_metric > best_metric:
                best_metric = val_metric
                best_snapshot = _snapshot(params)
                log.best_epoch = epoch
                log.best_metric = val_metric
                epochs_since_best = 0
            else:
                epochs_since_best += 1
                if epochs_since_best >= config.patience:
                    log.notes.append(f"early stop at epoch {epoch} (best epoch {log.best_epoch})")
                    break

    if early_stopping and best_snapshot is not None:
        _restore(params, best_snapshot)
    else:
        log.best_epoch = len(log.epochs)
        log.best_metric = log.epochs[-1]["val_metric"] if log.epochs else float("nan")
    model.mark_dirty()


def train_step1(
    dataset: Dataset, config: RunConfig, store, *, log_fn: LogFn | None = None
) -> tuple[StepOneModel, TrainLog]:
    """Train the joint act / slot-presence model on a dataset."""
    config = config.validate()
    if not dataset.turns:
        raise DomainError("cannot train on an empty dataset")
    system_tokens = collect_system_tokens(dataset.turns)
    model = StepOneModel.build(config, dataset.ontology, system_tokens, store)
    log = TrainLog()
    train_turns, val_turns = _split_turns(dataset.turns, config.validation_fraction, config.seed)
    if not val_turns:
        log.notes.append("dataset has a single dialogue; trained without validation split")

    ontology = model.ontology
    act_targets = {id(t): ontology.act_index(ontology.act_label(t.reference.act_pattern)) for t in train_turns}
    presence_targets = {
        id(t): {slot: 1 if slot in {s for s, _ in t.reference.pairs} else 0 for slot in ontology.slots}
        for t in train_turns
    }

    def example_loss(model: StepOneModel, turn: Turn, nbest, dropout_rng) -> Tensor:
        hidden = model.encoder.encode(nbest, turn.system_history)
        hidden = dropout_apply(hidden, config.dropout, TRAIN, dropout_rng)
        act_probs, slot_probs = model.head_probs(hidden)
        terms = [nll_loss(act_probs, act_targets[id(turn)])]
        if not config.act_only:
            presence = presence_targets[id(turn)]
            for slot in ontology.slots:
                terms.append(nll_loss(slot_probs[slot], presence[slot]))
        return add_n(terms)

    _run_epochs(
        model=model,
        params=model.parameters(),
        turns=train_turns,
        val_turns=val_turns,
        config=config,
        example_loss=example_loss,
        val_metric_fn=step1_f1,
        log_fn=log_fn,
        log=log,
    )
    return model, log


def train_step2(
    dataset: Dataset, slot: str, config: RunConfig, store, *, log_fn: LogFn | None = None
) -> tuple[SlotValueModel | None, TrainLog]:
    """Train the value model for one slot; None when the slot is skipped.

    Training sees exactly the turns whose reference contains the slot; the
    target is the reference value (the first one, if a turn carries
    several).  Slots with fewer than two observed values are skipped:
    detecting them in step one already determines the value.
    """
    config = config.validate()
    if slot not in dataset.ontology.slots:
        raise DomainError(f"unknown slot {slot!r}")
    log = TrainLog()
    values = dataset.ontology.slot_values(slot)
    if len(values) < 2:
        log.notes.append(f"slot {slot!r} has a single observed value; value model skipped")
        if log_fn:
            log_fn(log.notes[-1])
        return None, log

    turns = [t for t in dataset.turns if any(s == slot for s, _ in t.reference.pairs)]
    slot_position = dataset.ontology.slots.index(slot)
    model = SlotValueModel.build(
        config, slot, slot_position, values, collect_system_tokens(dataset.turns), store
    )
    value_index = {v: i for i, v in enumerate(values)}
    targets = {}
    for t in turns:
        first = next(v for s, v in t.reference.pairs if s == slot)
        targets[id(t)] = value_index[first]

    train_turns, val_turns = _split_turns(
        turns, config.validation_fraction, config.seed, extra=(slot_position + 1,)
    )

    def example_loss(model: SlotValueModel, turn: Turn, nbest, dropout_rng) -> Tensor:
        hidden = model.encoder.encode(nbest, turn.system_history)
        hidden = dropout_apply(hidden, config.dropout, TRAIN, dropout_rng)
        return nll_loss(model.value_probs(hidden), targets[id(turn)])

    def value_accuracy(model: SlotValueModel, val: Sequence[Turn]) -> float:
        hits = 0
        for t in val:
            probs = model.value_probs(model.encoder.encode(turn_nbest(t), t.system_history))
            if int(np.argmax(probs.data)) == targets[id(t)]:
                hits += 1
        return hits / len(val)

    _run_epochs(
        model=model,
        params=model.parameters(),
        turns=train_turns,
        val_turns=val_turns,
        config=config,
        example_loss=example_loss,
        val_metric_fn=value_accuracy,
        log_fn=log_fn,
        log=log,
    )
    return model, log


def cross_validate_step1(
    dataset: Dataset, config: RunConfig, store, k: int | None = None, *, log_fn: LogFn | None = None
):
    """K-fold dialogue-level cross-validation of the joint model.

    Returns (per-fold ScoreReports, summary dict with mean and population
    stdev per metric).  Each fold trains on the other folds with its own
    derived ontology and is scored on the held-out fold in presence mode.
    """
    config = config.validate()
    k = k or config.cv_folds
    plan = make_folds(dataset, k, config.seed)
    reports = []
    for fold in range(k):
        train_ds, held_ds = plan.split(dataset, fold)
        if log_fn:
            log_fn(f"fold {fold}: {train_ds.dialogue_count} train / {held_ds.dialogue_count} held dialogues")
        model, _ = train_step1(train_ds, config, store, log_fn=log_fn)
        frames = [decode_turn(t, model, {}, step1_only=True) for t in held_ds.turns]
        report = score_frames(frames, held_ds.turns, model.ontology, STEP1)
        reports.append(report)
        if log_fn:
            log_fn(f"fold {fold}: f1 {report.f1:.4f} acc {report.accuracy:.4f} ice {report.ice:.4f}")

    summary = {}
    for metric in ("accuracy", "precision", "recall", "f1", "ice"):
        series = np.asarray([getattr(r, metric) for r in reports], dtype=np.float64)
        summary[metric] = {"mean": float(series.mean()), "stdev": float(series.std())}
    return reports, summary
