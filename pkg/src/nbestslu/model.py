"""Model assembly: the shared turn encoder plus classification heads.

Five variants cover the studied configurations:

    cnn          sentence features only, no context model
    cnn_lstm_w1  tanh combination with the last system turn as context
    cnn_lstm_w4  tanh combination with the last four system turns
    cnn_lstm_w   tanh combination with the whole system history
    lstm_all     context LSTM that receives the projected sentence vector
                 as its final input step

The joint model reads one combined vector through an act head and one
presence head per slot; each slot-value model reads its own combined
vector through a single head over that slot's value inventory.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from . import rng as rng_mod
from .autograd import Tensor
from .config import RunConfig
from .context import (
    IDENTITY,
    LSTM_INPUT,
    TANH_COMBINE,
    CombinerParams,
    ContextWindow,
    LstmParams,
    combine,
    context_tokens,
    run_context_lstm,
)
from .embeddings import EmbeddingTable
from .errors import ConfigError, ModelStateError
from .ontology import Ontology
from .sentence import ConvFilterBank, NBestList, encode_sentence

VARIANTS: dict[str, tuple[str, str]] = {
    "cnn": ("none", IDENTITY),
    "cnn_lstm_w1": ("last_1", TANH_COMBINE),
    "cnn_lstm_w4": ("last_4", TANH_COMBINE),
    "cnn_lstm_w": ("all", TANH_COMBINE),
    "lstm_all": ("all", LSTM_INPUT),
}


class TurnEncoder:
    """Everything between raw turn inputs and the combined hidden vector."""

    def __init__(
        self,
        variant: str,
        table: EmbeddingTable,
        system_tokens,
        rng: np.random.Generator,
        *,
        dim: int,
        window_sizes: tuple[int, ...],
        maps_per_window: int,
        hidden_size: int,
        nbest_cap: int,
    ):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown model variant {variant!r}")
        window_name, combine_mode = VARIANTS[variant]
        self.variant = variant
        self.window = ContextWindow.from_name(window_name)
        self.table = table
        self.nbest_cap = nbest_cap
        self.bank = ConvFilterBank(dim, window_sizes, maps_per_window, rng)
        if combine_mode == IDENTITY:
            table.prepare_runtime_rows((), rng)
            self.system_embeddings = None
            self.lstm = None
            self.combiner = CombinerParams.identity()
            self.out_dim = self.bank.feature_size
        else:
            table.prepare_runtime_rows(system_tokens, rng)
            self.system_embeddings = Tensor(table.system_matrix, requires_grad=True, name="embed.system")
            self.lstm = LstmParams(dim, hidden_size, rng)
            if combine_mode == TANH_COMBINE:
                self.combiner = CombinerParams.tanh_combiner(self.bank.feature_size, hidden_size, rng)
            else:
                self.combiner = CombinerParams.projector(self.bank.feature_size, dim, rng)
            self.out_dim = hidden_size

    def parameters(self) -> dict[str, Tensor]:
        out = dict(self.bank.parameters())
        if self.lstm is not None:
            out.update(self.lstm.parameters())
            out.update(self.combiner.parameters())
            out[self.system_embeddings.name] = self.system_embeddings
        return out

    def encode(self, nbest: NBestList, system_history) -> Tensor:
        """Combined hidden vector for one turn."""
        sentence = encode_sentence(nbest.truncated(self.nbest_cap), self.table, self.bank)
        if self.combiner.mode == IDENTITY:
            return sentence
        tokens = context_tokens(system_history, self.window)
        state = run_context_lstm(tokens, self.table, self.system_embeddings, self.lstm)
        return combine(sentence, state, self.combiner, lstm=self.lstm)


def _head(rng: np.random.Generator, classes: int, dim: int, name: str) -> tuple[Tensor, Tensor]:
    weight = Tensor(rng.uniform(-0.1, 0.1, (classes, dim)), requires_grad=True, name=f"{name}.w")
    bias = Tensor(np.zeros(classes), requires_grad=True, name=f"{name}.b")
    return weight, bias


def _check_finite_params(params: dict[str, Tensor]) -> None:
    for name, tensor in params.items():
        if not np.all(np.isfinite(tensor.data)):
            raise ModelStateError(f"parameter {name} contains non-finite values; model is unusable")


class StepOneModel:
    """Joint prediction of the dialogue act and per-slot presence."""

    PRESENT = 1  # index of the "present" class in every presence head

    def __init__(self, config: RunConfig, ontology: Ontology, encoder: TurnEncoder,
                 act_head: tuple[Tensor, Tensor], slot_heads: dict[str, tuple[Tensor, Tensor]]):
        self.config = config
        self.ontology = ontology
        self.encoder = encoder
        self.act_head = act_head
        self.slot_heads = slot_heads
        self._validated = False

    @classmethod
    def build(cls, config: RunConfig, ontology: Ontology, system_tokens, store: EmbeddingTable) -> "StepOneModel":
        rng = rng_mod.substream(config.seed, rng_mod.INIT)
        encoder = TurnEncoder(
            config.model,
            store.view(),
            system_tokens,
            rng,
            dim=store.dim,
            window_sizes=config.filter_windows,
            maps_per_window=config.filters_per_window,
            hidden_size=config.hidden_size,
            nbest_cap=config.nbest_cap,
        )
        act_head = _head(rng, len(ontology.acts), encoder.out_dim, "head.act")
        slot_heads = {slot: _head(rng, 2, encoder.out_dim, f"head.slot.{slot}") for slot in ontology.slots}
        return cls(config, ontology, encoder, act_head, slot_heads)

    def parameters(self) -> dict[str, Tensor]:
        out = self.encoder.parameters()
        for tensor in self.act_head:
            out[tensor.name] = tensor
        for slot in self.ontology.slots:
            for tensor in self.slot_heads[slot]:
                out[tensor.name] = tensor
        return out

    def head_probs(self, hidden: Tensor) -> tuple[Tensor, dict[str, Tensor]]:
        """Softmax distributions of every head over one combined vector."""
        act = ag.softmax(ag.affine(hidden, *self.act_head))
        slots = {slot: ag.softmax(ag.affine(hidden, *self.slot_heads[slot])) for slot in self.ontology.slots}
        return act, slots

    def validate_finite(self) -> None:
        if not self._validated:
            _check_finite_params(self.parameters())
            self._validated = True

    def mark_dirty(self) -> None:
        self._validated = False


class SlotValueModel:
    """Value prediction for one slot, with its own encoder and head."""

    def __init__(self, config: RunConfig, slot: str, values: tuple[str, ...],
                 encoder: TurnEncoder, head: tuple[Tensor, Tensor]):
        self.config = config
        self.slot = slot
        self.values = values
        self.encoder = encoder
        self.head = head
        self._validated = False

    @classmethod
    def build(cls, config: RunConfig, slot: str, slot_position: int, values, system_tokens,
              store: EmbeddingTable) -> "SlotValueModel":
        values = tuple(values)
        if len(values) < 2:
            raise ConfigError(f"slot {slot!r} has {len(values)} value(s); value models need at least 2")
        rng = rng_mod.substream(config.seed, rng_mod.INIT, slot_position + 1)
        encoder = TurnEncoder(
            config.model,
            store.view(),
            system_tokens,
            rng,
            dim=store.dim,
            window_sizes=config.filter_windows,
            maps_per_window=config.filters_per_window,
            hidden_size=config.hidden_size,
            nbest_cap=config.nbest_cap,
        )
        head = _head(rng, len(values), encoder.out_dim, f"head.value.{slot}")
        return cls(config, slot, values, encoder, head)

    def parameters(self) -> dict[str, Tensor]:
        out = self.encoder.parameters()
        for tensor in self.head:
            out[tensor.name] = tensor
        return out

    def value_probs(self, hidden: Tensor) -> Tensor:
        return ag.softmax(ag.affine(hidden, *self.head))

    def validate_finite(self) -> None:
        if not self._validated:
            _check_finite_params(self.parameters())
            self._validated = True

    def mark_dirty(self) -> None:
        self._validated = False
