"""Corpus data model, JSON Lines ingestion, vocabularies, and saliency alignment.

Input records arrive fully annotated (tokens plus POS / dependency / shape /
NER tags produced upstream); this module never runs a tagger and never
re-splits tokens.
"""
from __future__ import annotations

import gzip
import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

PAD_ID = 0
UNK_ID = 1
FEATURE_CHANNELS = ("pos", "dep", "shape", "ner")


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


@dataclass
class AnnotatedToken:
    surface: str
    pos: str
    dep: str
    shape: str
    ner: str
    vocab_id: int | None = None

    def __post_init__(self):
        if not self.surface:
            raise CorpusError("token surface must be non-empty")


@dataclass
class Sentence:
    tokens: list[AnnotatedToken]
    keep_labels: list[int] | None = None

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError("sentence must contain at least one token")
        if self.keep_labels is not None and len(self.keep_labels) != len(self.tokens):
            raise CorpusError("keep_labels length differs from token count")

    def __len__(self):
        return len(self.tokens)

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


@dataclass
class Paragraph:
    record_id: str
    sentences: list[Sentence]
    saliency_labels: list[int] | None = None
    summary: list[str] | None = None

    def __post_init__(self):
        n = self.word_count()
        if self.saliency_labels is not None and len(self.saliency_labels) != n:
            raise CorpusError("saliency_labels length differs from word count")

    def word_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def words(self) -> list[AnnotatedToken]:
        return [t for s in self.sentences for t in s.tokens]


@dataclass
class Vocabulary:
    """Surface-form vocabulary with reserved PAD (0) and UNK (1) ids."""

    token_to_id: dict[str, int] = field(default_factory=dict)
    id_to_token: list[str] = field(default_factory=lambda: ["<pad>", "<unk>"])
    max_size: int = 50_000

    def __len__(self):
        return len(self.id_to_token)

    def lookup(self, surface: str) -> int:
        return self.token_to_id.get(surface.lower(), UNK_ID)

    def _add(self, token: str):
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)


@dataclass
class TagVocabulary:
    """Per-channel feature-tag vocabulary; unknown tags map to id 0."""

    tag_to_id: dict[str, int] = field(default_factory=dict)
    id_to_tag: list[str] = field(default_factory=lambda: ["<unk-tag>"])

    def __len__(self):
        return len(self.id_to_tag)

    def lookup(self, tag: str) -> int:
        return self.tag_to_id.get(tag, 0)

    def _add(self, tag: str):
        if tag not in self.tag_to_id:
            self.tag_to_id[tag] = len(self.id_to_tag)
            self.id_to_tag.append(tag)


def _open_maybe_gzip(path: str | Path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _require(record: dict, key: str, line_no: int):
    if key not in record:
        raise CorpusError(f"line {line_no}: missing field {key!r}")
    return record[key]


def _build_sentence(tokens, pos, dep, shape, ner, keep, rid: str) -> Sentence:
    channels = {"pos": pos, "dep": dep, "shape": shape, "ner": ner}
    for name, tags in channels.items():
        if len(tags) != len(tokens):
            raise CorpusError(f"record {rid!r}: {name} length {len(tags)} != {len(tokens)} tokens")
    if keep is not None and len(keep) != len(tokens):
        raise CorpusError(f"record {rid!r}: keep length {len(keep)} != {len(tokens)} tokens")
    toks = [AnnotatedToken(t, p, d, s, n)
            for t, p, d, s, n in zip(tokens, pos, dep, shape, ner)]
    return Sentence(toks, keep_labels=list(keep) if keep is not None else None)


def ingest_corpus(path: str | Path, schema: str) -> list[Paragraph]:
    """Read a JSON Lines corpus file (optionally gzipped).

    schema "compression": one pre-annotated sentence with binary keep labels
    per record.  schema "summary": multi-sentence paragraph plus a reference
    summary token list.
    """
    if schema not in ("compression", "summary"):
        raise ValueError(f"unknown schema {schema!r}")
    paragraphs = []
    with _open_maybe_gzip(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"line {line_no}: malformed JSON ({e.msg})") from e
            rid = str(_require(record, "id", line_no))
            if schema == "compression":
                sent = _build_sentence(
                    _require(record, "tokens", line_no),
                    _require(record, "pos", line_no),
                    _require(record, "dep", line_no),
                    _require(record, "shape", line_no),
                    _require(record, "ner", line_no),
                    record.get("keep"),
                    rid,
                )
                paragraphs.append(Paragraph(rid, [sent]))
            else:
                sent_tokens = _require(record, "sentences", line_no)
                pos = _require(record, "pos", line_no)
                dep = _require(record, "dep", line_no)
                shape = _require(record, "shape", line_no)
                ner = _require(record, "ner", line_no)
                for name, chan in (("pos", pos), ("dep", dep), ("shape", shape), ("ner", ner)):
                    if len(chan) != len(sent_tokens):
                        raise CorpusError(
                            f"record {rid!r}: {name} has {len(chan)} sentences, "
                            f"expected {len(sent_tokens)}")
                sents = [
                    _build_sentence(toks, p, d, s, n, None, rid)
                    for toks, p, d, s, n in zip(sent_tokens, pos, dep, shape, ner)
                ]
                summary = record.get("summary")
                paragraphs.append(Paragraph(rid, sents, summary=list(summary) if summary else None))
    return paragraphs


def _canonical_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def serialize_corpus(paragraphs: list[Paragraph], schema: str) -> str:
    """Render paragraphs back to canonical JSON Lines (round-trip safe)."""
    lines = []
    for para in paragraphs:
        if schema == "compression":
            sent = para.sentences[0]
            record = {
                "id": para.record_id,
                "tokens": sent.surfaces(),
                "pos": [t.pos for t in sent.tokens],
                "dep": [t.dep for t in sent.tokens],
                "shape": [t.shape for t in sent.tokens],
                "ner": [t.ner for t in sent.tokens],
            }
            if sent.keep_labels is not None:
                record["keep"] = sent.keep_labels
        else:
            record = {
                "id": para.record_id,
                "sentences": [s.surfaces() for s in para.sentences],
                "pos": [[t.pos for t in s.tokens] for s in para.sentences],
                "dep": [[t.dep for t in s.tokens] for s in para.sentences],
                "shape": [[t.shape for t in s.tokens] for s in para.sentences],
                "ner": [[t.ner for t in s.tokens] for s in para.sentences],
            }
            if para.summary is not None:
                record["summary"] = para.summary
        lines.append(_canonical_json(record))
    return "".join(line + "\n" for line in lines)


def build_vocabulary(corpus: list[Paragraph], max_size: int = 50_000) -> Vocabulary:
    """Most frequent lowercased surfaces, ties broken by first occurrence."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    pos = 0
    for para in corpus:
        for tok in para.words():
            surface = tok.surface.lower()
            counts[surface] += 1
            if surface not in first_seen:
                first_seen[surface] = pos
            pos += 1
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    vocab = Vocabulary(max_size=max_size)
    for token in ranked[:max_size]:
        vocab._add(token)
    return vocab


def build_tag_vocabularies(corpus: list[Paragraph]) -> dict[str, TagVocabulary]:
    vocabs = {channel: TagVocabulary() for channel in FEATURE_CHANNELS}
    for para in corpus:
        for tok in para.words():
            for channel in FEATURE_CHANNELS:
                vocabs[channel]._add(getattr(tok, channel))
    return vocabs


def assign_vocab_ids(corpus: list[Paragraph], vocab: Vocabulary):
    for para in corpus:
        for tok in para.words():
            tok.vocab_id = vocab.lookup(tok.surface)


def load_stopwords() -> frozenset[str]:
    text = resources.files("headliner.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


_STOPWORDS: frozenset[str] | None = None


def _stopwords() -> frozenset[str]:
    global _STOPWORDS
    if _STOPWORDS is None:
        _STOPWORDS = load_stopwords()
    return _STOPWORDS


def _is_punctuation(token: str) -> bool:
    return not any(c.isalnum() for c in token)


def align_saliency_labels(paragraph: Paragraph) -> list[int]:
    """Binary per-word labels: 1 iff the word occurs in the summary.

    Matching is by lowercased surface; stopwords and pure punctuation are
    always labeled 0 to keep function words out of the positive class.
    """
    if paragraph.summary is None:
        raise CorpusError(f"record {paragraph.record_id!r}: no summary to align against")
    summary_tokens = {t.lower() for t in paragraph.summary}
    labels = []
    for tok in paragraph.words():
        surface = tok.surface.lower()
        hit = (surface in summary_tokens
               and surface not in _stopwords()
               and not _is_punctuation(surface))
        labels.append(1 if hit else 0)
    return labels
