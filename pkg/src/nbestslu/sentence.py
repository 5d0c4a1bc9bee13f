"""Sentence representation from an ASR n-best list.

Each hypothesis is convolved with a bank of filters (one block per window
size, tanh nonlinearity), every feature map is max-pooled to one scalar,
and the pooled vectors of all hypotheses are combined by a posterior-
weighted sum.  The result is one fixed-length vector per user turn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import normalize_confidences
from .embeddings import EmbeddingTable, TokenSequence, tokenize
from .errors import DomainError


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    confidence: float

    def __post_init__(self):
        if self.confidence < 0:
            raise DomainError(f"hypothesis confidence must be non-negative, got {self.confidence}")


@dataclass(frozen=True)
class NBestList:
    """Ranked alternative transcriptions with non-negative confidences."""

    hyps: tuple[Hypothesis, ...]

    @classmethod
    def from_texts(cls, pairs) -> "NBestList":
        return cls(tuple(Hypothesis(tokenize(text).tokens, float(conf)) for text, conf in pairs))

    def truncated(self, cap: int) -> "NBestList":
        if cap < 1:
            raise DomainError(f"n-best cap must be at least 1, got {cap}")
        return NBestList(self.hyps[:cap])

    def __len__(self) -> int:
        return len(self.hyps)


class ConvFilterBank:
    """One filter block per window size.

    Each block holds ``maps_per_window`` filters of length
    ``window * dim`` plus one bias per filter; the pooled feature vector
    has ``len(window_sizes) * maps_per_window`` entries.
    """

    def __init__(
        self,
        dim: int,
        window_sizes: tuple[int, ...] = (3, 4, 5),
        maps_per_window: int = 100,
        rng: np.random.Generator | None = None,
        prefix: str = "conv",
    ):
        if not window_sizes or any(w < 1 for w in window_sizes):
            raise DomainError(f"window sizes must be positive, got {window_sizes}")
        if len(set(window_sizes)) != len(window_sizes):
            raise DomainError(f"window sizes must be distinct, got {window_sizes}")
        if maps_per_window < 1:
            raise DomainError(f"need at least one feature map per window, got {maps_per_window}")
        self.dim = dim
        self.window_sizes = tuple(sorted(window_sizes))
        self.maps_per_window = maps_per_window
        self.weights: dict[int, Tensor] = {}
        self.biases: dict[int, Tensor] = {}
        for width in self.window_sizes:
            if rng is None:
                weight = np.zeros((width * dim, maps_per_window))
            else:
                weight = rng.uniform(-0.1, 0.1, (width * dim, maps_per_window))
            self.weights[width] = Tensor(weight, requires_grad=True, name=f"{prefix}.w{width}")
            self.biases[width] = Tensor(
                np.zeros(maps_per_window), requires_grad=True, name=f"{prefix}.b{width}"
            )

    @property
    def feature_size(self) -> int:
        return len(self.window_sizes) * self.maps_per_window

    @property
    def max_window(self) -> int:
        return self.window_sizes[-1]

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for width in self.window_sizes:
            out[self.weights[width].name] = self.weights[width]
            out[self.biases[width].name] = self.biases[width]
        return out


def _window_matrix(rows: np.ndarray, width: int) -> np.ndarray:
    """[m, k] embeddings -> [m-width+1, width*k]; row i is rows[i:i+width] flattened."""
    count = rows.shape[0] - width + 1
    out = np.empty((count, width * rows.shape[1]), dtype=np.float64)
    for i in range(count):
        out[i] = rows[i : i + width].ravel()
    return out


def encode_hypothesis(tokens, table: EmbeddingTable, bank: ConvFilterBank) -> Tensor:
    """Pooled convolution features for one hypothesis.

    Hypotheses shorter than the largest window (including the empty one)
    are right-padded with zero vectors, so every filter sees at least one
    window and an empty hypothesis yields tanh(bias) per filter.
    """
    if isinstance(tokens, TokenSequence):
        tokens = tokens.tokens
    if table.dim != bank.dim:
        raise DomainError(f"embedding dim {table.dim} does not match filter bank dim {bank.dim}")
    rows = table.hypothesis_rows(tokens)
    if rows.shape[0] < bank.max_window:
        pad = np.zeros((bank.max_window - rows.shape[0], table.dim))
        rows = np.vstack([rows, pad]) if rows.shape[0] else pad
    pooled = []
    for width in bank.window_sizes:
        windows = Tensor(_window_matrix(rows, width))
        maps = ag.tanh(ag.add_bias_rows(ag.matmul(windows, bank.weights[width]), bank.biases[width]))
        pooled.append(ag.columnwise_max(maps))
    return ag.concat1d(pooled)


def encode_sentence(nbest: NBestList, table: EmbeddingTable, bank: ConvFilterBank) -> Tensor:
    """Confidence-weighted sum of per-hypothesis feature vectors.

    Raw confidences are renormalized to sum to one, which makes the result
    invariant to uniform rescaling.  Terms are summed in a canonical order
    (weight descending, then tokens) so permuting the n-best list yields a
    bit-identical vector.
    """
    if len(nbest) == 0:
        raise DomainError("empty n-best list; supply a single empty hypothesis instead")
    # Canonical order before normalization: the raw-score sum, the divisions
    # and the additions below then all round identically for any input order.
    ordered = sorted(nbest.hyps, key=lambda h: (-h.confidence, h.tokens))
    weights = normalize_confidences([h.confidence for h in ordered])
    terms = [
        ag.scale(encode_hypothesis(h.tokens, table, bank), float(w)) for h, w in zip(ordered, weights)
    ]
    return ag.add_n(terms)
