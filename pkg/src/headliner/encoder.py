"""Embedding channels and sentence encoders.

Two interchangeable encoders share one output contract (a matrix of
per-position hidden states): the two-layer bidirectional LSTM used for real
models, and a windowed feedforward encoder that keeps tests fast.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Node, ParameterStore
from .corpus import FEATURE_CHANNELS, UNK_ID, Sentence, TagVocabulary, Vocabulary

# Hidden-state width of the standard encoder: 64 per direction, bidirectional.
HIDDEN_PER_DIRECTION = 64
ENCODER_DIM = 2 * HIDDEN_PER_DIRECTION

# The encoder output is simply an n x d_h matrix node.
EncoderOutput = Node


@dataclass
class EmbeddingConfig:
    word_dim: int = 200
    feature_dim: int = 30
    feature_channels: tuple[str, ...] = FEATURE_CHANNELS
    pretrained_path: str | None = None
    use_pretrained: bool = False
    contextual_dim: int = 0

    def __post_init__(self):
        if self.pretrained_path is not None:
            self.use_pretrained = True

    def input_dim(self) -> int:
        d = self.word_dim
        if self.use_pretrained:
            d += self.word_dim
        d += self.contextual_dim
        d += self.feature_dim * len(self.feature_channels)
        return d


def load_pretrained_vectors(path: str | Path, vocab: Vocabulary, dim: int) -> np.ndarray:
    """Build a |V| x dim matrix from a whitespace-separated text vector file.

    Tokens absent from the file fall back to the UNK row (the file's <unk>
    vector when present, otherwise zeros).
    """
    table = np.zeros((len(vocab), dim))
    seen = np.zeros(len(vocab), dtype=bool)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(
                    f"{path}: line {line_no} has {len(values)} dims, expected {dim}")
            idx = UNK_ID if token == "<unk>" else vocab.token_to_id.get(token.lower())
            if idx is None:
                continue
            table[idx] = [float(v) for v in values]
            seen[idx] = True
    table[~seen] = table[UNK_ID]
    return table


CTXV_MAGIC = b"CTXV"
CTXV_VERSION = 1


def write_contextual_vectors(path: str | Path, records: dict[str, np.ndarray], dim: int):
    with open(path, "wb") as fh:
        fh.write(CTXV_MAGIC)
        fh.write(struct.pack("<II", CTXV_VERSION, dim))
        for rid, vectors in records.items():
            if vectors.shape[1] != dim:
                raise ValueError(f"record {rid!r}: dim {vectors.shape[1]} != header dim {dim}")
            rid_bytes = rid.encode("utf-8")
            fh.write(struct.pack("<I", len(rid_bytes)))
            fh.write(rid_bytes)
            fh.write(struct.pack("<I", vectors.shape[0]))
            fh.write(vectors.astype("<f4").tobytes())


def read_contextual_vectors(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CTXV_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, dim = struct.unpack("<II", fh.read(8))
        if version != CTXV_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        records: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            (rid_len,) = struct.unpack("<I", head)
            rid = fh.read(rid_len).decode("utf-8")
            (n,) = struct.unpack("<I", fh.read(4))
            data = np.frombuffer(fh.read(4 * n * dim), dtype="<f4")
            records[rid] = data.reshape(n, dim).astype(np.float64)
    return records, dim


class Embeddings:
    """Concatenation of word, optional pretrained/contextual, and feature channels."""

    def __init__(self, config: EmbeddingConfig, vocab: Vocabulary,
                 tag_vocabs: dict[str, TagVocabulary], store: ParameterStore,
                 rng: np.random.Generator, prefix: str = "emb"):
        self.config = config
        self.vocab = vocab
        self.tag_vocabs = tag_vocabs
        self.prefix = prefix
        self.word = store.add(f"{prefix}.word",
                              rng.uniform(-0.1, 0.1, (len(vocab), config.word_dim)))
        self.features = {}
        for channel in config.feature_channels:
            size = len(tag_vocabs[channel])
            self.features[channel] = store.add(
                f"{prefix}.{channel}", rng.uniform(-0.1, 0.1, (size, config.feature_dim)))
        self.pretrained = None
        if config.use_pretrained:
            if config.pretrained_path is not None:
                table = load_pretrained_vectors(config.pretrained_path, vocab, config.word_dim)
            else:
                # values arrive later (e.g. from a saved bundle)
                table = np.zeros((len(vocab), config.word_dim))
            self.pretrained = store.add(f"{prefix}.pretrained", table, frozen=True)

    def embed(self, sentence: Sentence, contextual: np.ndarray | None = None) -> Node:
        ids = np.array([t.vocab_id if t.vocab_id is not None else self.vocab.lookup(t.surface)
                        for t in sentence.tokens])
        parts = [ad.getitem(self.word, ids)]
        if self.pretrained is not None:
            parts.append(ad.getitem(self.pretrained, ids))
        if self.config.contextual_dim:
            if contextual is None:
                raise ValueError("contextual vectors required but not provided")
            if contextual.shape != (len(sentence), self.config.contextual_dim):
                raise ValueError("contextual vector shape mismatch")
            parts.append(ad.constant(contextual))
        for channel in self.config.feature_channels:
            tag_ids = np.array([self.tag_vocabs[channel].lookup(getattr(t, channel))
                                for t in sentence.tokens])
            parts.append(ad.getitem(self.features[channel], tag_ids))
        return ad.concat(parts, axis=1)


def dropout(x: Node, p: float, rng: np.random.Generator) -> Node:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, ad.constant(mask))


def lstm_weights(store: ParameterStore, name: str, input_dim: int, hidden: int,
                 rng: np.random.Generator):
    """Allocate one LSTM cell (gate order i, f, g, o; forget bias 1)."""
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0
    return (
        store.add(f"{name}.W_ih", rng.uniform(-0.1, 0.1, (4 * hidden, input_dim))),
        store.add(f"{name}.W_hh", rng.uniform(-0.1, 0.1, (4 * hidden, hidden))),
        store.add(f"{name}.b", bias),
    )


def run_lstm(rows: list[Node], weights, hidden: int) -> list[Node]:
    """Run one LSTM direction over a list of input vectors."""
    W_ih, W_hh, b = weights
    H = hidden
    h = ad.constant(np.zeros(H))
    c = ad.constant(np.zeros(H))
    outputs = []
    for x in rows:
        z = ad.add(ad.add(ad.matmul(W_ih, x), ad.matmul(W_hh, h)), b)
        i = ad.sigmoid(z[0:H])
        f = ad.sigmoid(z[H:2 * H])
        g = ad.tanh(z[2 * H:3 * H])
        o = ad.sigmoid(z[3 * H:4 * H])
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        outputs.append(h)
    return outputs


class LSTMEncoder:
    """Two-layer bidirectional LSTM, 64 units per direction by default."""

    def __init__(self, store: ParameterStore, input_dim: int,
                 hidden: int = HIDDEN_PER_DIRECTION, layers: int = 2,
                 dropout_p: float = 0.5, prefix: str = "lstm",
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden = hidden
        self.layers = layers
        self.dropout_p = dropout_p
        self.out_dim = 2 * hidden
        self.cells = []
        for layer in range(layers):
            d_in = input_dim if layer == 0 else 2 * hidden
            per_dir = {
                direction: lstm_weights(store, f"{prefix}.l{layer}.{direction}",
                                        d_in, hidden, rng)
                for direction in ("fw", "bw")
            }
            self.cells.append(per_dir)

    def _run_direction(self, rows: list[Node], weights) -> list[Node]:
        return run_lstm(rows, weights, self.hidden)

    def encode(self, embedded: Node, training: bool = False,
               rng: np.random.Generator | None = None) -> Node:
        n = embedded.shape[0]
        current = embedded
        for layer in range(self.layers):
            if training:
                current = dropout(current, self.dropout_p, rng)
            rows = [current[i] for i in range(n)]
            fw = self._run_direction(rows, self.cells[layer]["fw"])
            bw = self._run_direction(rows[::-1], self.cells[layer]["bw"])[::-1]
            per_pos = [ad.concat([f, bk], axis=0) for f, bk in zip(fw, bw)]
            current = ad.stack(per_pos, axis=0)
        return current


class WindowedEncoder:
    """Feedforward encoder over a fixed token window; drop-in for LSTMEncoder.

    h_i = tanh(W . concat(e_{i-r} .. e_{i+r}) + b) with zero padding at the
    sentence boundaries.  Exists purely so the DP and property tests run in
    milliseconds; not part of the modeled approach.
    """

    def __init__(self, store: ParameterStore, input_dim: int, radius: int = 2,
                 out_dim: int = ENCODER_DIM, dropout_p: float = 0.5,
                 prefix: str = "wenc", rng: np.random.Generator | None = None):
        if radius < 0:
            raise ValueError("radius must be >= 0")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.radius = radius
        self.input_dim = input_dim
        self.out_dim = out_dim
        self.dropout_p = dropout_p
        width = (2 * radius + 1) * input_dim
        self.W = store.add(f"{prefix}.W", rng.uniform(-0.1, 0.1, (width, out_dim)))
        self.b = store.add(f"{prefix}.b", np.zeros(out_dim))

    def _shifted(self, x: Node, offset: int) -> Node:
        n, d = x.shape
        if offset == 0:
            return x
        pad = ad.constant(np.zeros((abs(offset), d)))
        if offset < 0:  # look back: rows i+offset
            return ad.concat([pad, x], axis=0)[0:n]
        return ad.concat([x, pad], axis=0)[offset:offset + n]

    def encode(self, embedded: Node, training: bool = False,
               rng: np.random.Generator | None = None) -> Node:
        if training:
            embedded = dropout(embedded, self.dropout_p, rng)
        window = ad.concat(
            [self._shifted(embedded, off) for off in range(-self.radius, self.radius + 1)],
            axis=1)
        return ad.tanh(ad.add(ad.matmul(window, self.W), self.b))
