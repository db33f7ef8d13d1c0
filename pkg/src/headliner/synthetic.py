"""Rule-based synthetic corpora so the whole test suite runs without data.

Compression rule: a token is kept iff its POS tag is CONTENT, and the first
token of every sentence is always kept (the positional rule).  Saliency
rule: words from a marked lexicon are the ones that appear in the summary.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CONTENT, FILLER = "CONTENT", "FILLER"

_CONTENT_WORDS = [f"noun{i}" for i in range(40)] + [f"verb{i}" for i in range(20)]
_FILLER_WORDS = [f"fill{i}" for i in range(40)]
_DEPS = ["root", "mod", "obj", "det"]
_SHAPES = ["x", "xx", "X", "Xx"]
_NERS = ["O", "ENT"]


def gen_compression_records(n_examples: int, seed: int = 0,
                            min_len: int = 4, max_len: int = 12) -> list[dict]:
    rng = np.random.default_rng(seed)
    records = []
    for idx in range(n_examples):
        n = int(rng.integers(min_len, max_len + 1))
        tokens, pos, keep = [], [], []
        for i in range(n):
            is_content = bool(rng.random() < 0.45)
            word = (_CONTENT_WORDS[rng.integers(len(_CONTENT_WORDS))] if is_content
                    else _FILLER_WORDS[rng.integers(len(_FILLER_WORDS))])
            tag = CONTENT if is_content else FILLER
            tokens.append(word)
            pos.append(tag)
            keep.append(1 if (tag == CONTENT or i == 0) else 0)
        records.append({
            "id": f"syn-{idx:05d}",
            "tokens": tokens,
            "pos": pos,
            "dep": [str(_DEPS[rng.integers(len(_DEPS))]) for _ in range(n)],
            "shape": [str(_SHAPES[rng.integers(len(_SHAPES))]) for _ in range(n)],
            "ner": [str(_NERS[rng.integers(len(_NERS))]) for _ in range(n)],
            "keep": keep,
        })
    return records


_SALIENT_WORDS = [f"topic{i}" for i in range(30)]
_PLAIN_WORDS = [f"word{i}" for i in range(60)]


def gen_summary_records(n_examples: int, seed: int = 0) -> list[dict]:
    """Paragraphs where exactly one sentence carries marked salient words."""
    rng = np.random.default_rng(seed)
    records = []
    for idx in range(n_examples):
        n_sents = int(rng.integers(2, 5))
        salient_sent = int(rng.integers(n_sents))
        sentences, summary = [], []
        for s in range(n_sents):
            n = int(rng.integers(4, 9))
            sent = []
            for i in range(n):
                if s == salient_sent and rng.random() < 0.5:
                    word = str(_SALIENT_WORDS[rng.integers(len(_SALIENT_WORDS))])
                    summary.append(word)
                else:
                    word = str(_PLAIN_WORDS[rng.integers(len(_PLAIN_WORDS))])
                sent.append(word)
            sentences.append(sent)
        if not summary:  # guarantee a non-empty summary
            sentences[salient_sent][0] = _SALIENT_WORDS[0]
            summary.append(_SALIENT_WORDS[0])
        records.append({
            "id": f"par-{idx:05d}",
            "sentences": sentences,
            "pos": [[CONTENT] * len(s) for s in sentences],
            "dep": [["root"] * len(s) for s in sentences],
            "shape": [["x"] * len(s) for s in sentences],
            "ner": [["O"] * len(s) for s in sentences],
            "summary": summary,
        })
    return records


def gen_lm_sentences(n_sentences: int, seed: int = 0,
                     vocab: tuple[str, ...] = ("alpha", "beta", "gamma"),
                     length: int = 6) -> list[list[str]]:
    """Deterministic cyclic bigrams: each word is always followed by the next."""
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sentences):
        start = int(rng.integers(len(vocab)))
        sentences.append([vocab[(start + i) % len(vocab)] for i in range(length)])
    return sentences


def write_jsonl(path: str | Path, records: list[dict]):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, separators=(", ", ": ")) + "\n")
