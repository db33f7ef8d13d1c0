"""Versioned binary model container.

Layout: magic "HDLN", version u32 LE, then length-prefixed named sections.
JSON sections are canonical (sorted keys, fixed separators); tensors are
little-endian f32 arrays with a shape prefix, so a save/load/save cycle is
byte-identical.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TagVocabulary, Vocabulary

MAGIC = b"HDLN"
VERSION = 1

KINDS = ("selector", "naive", "crf", "scrf", "lm")


class BundleError(ValueError):
    """Corrupt or unsupported bundle file."""


@dataclass
class ModelBundle:
    kind: str
    vocab: Vocabulary
    tag_vocabs: dict[str, TagVocabulary]
    config: dict
    tensors: dict[str, np.ndarray]
    frozen: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BundleError(f"unknown model kind {self.kind!r}")


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")


def _write_section(out: io.BytesIO, name: str, payload: bytes):
    name_b = name.encode("utf-8")
    out.write(struct.pack("<I", len(name_b)))
    out.write(name_b)
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)


def _tensor_blob(tensors: dict[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        name_b = name.encode("utf-8")
        out.write(struct.pack("<I", len(name_b)))
        out.write(name_b)
        out.write(struct.pack("<I", arr.ndim))
        for dim in arr.shape:
            out.write(struct.pack("<I", dim))
        out.write(arr.astype("<f4").tobytes())
    return out.getvalue()


def _read_tensors(payload: bytes) -> dict[str, np.ndarray]:
    tensors = {}
    view = io.BytesIO(payload)

    def read(n: int) -> bytes:
        data = view.read(n)
        if len(data) != n:
            raise BundleError("truncated tensor section")
        return data

    while True:
        head = view.read(4)
        if not head:
            break
        if len(head) != 4:
            raise BundleError("truncated tensor section")
        (name_len,) = struct.unpack("<I", head)
        name = read(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", read(4))
        shape = tuple(struct.unpack("<I", read(4))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(read(4 * count), dtype="<f4")
        tensors[name] = data.reshape(shape).astype(np.float64)
    return tensors


def save_bundle(path: str | Path, bundle: ModelBundle):
    """Serialize; tensor values are rounded through f32 by the format."""
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    meta = {"kind": bundle.kind, "config": bundle.config, "frozen": sorted(bundle.frozen)}
    _write_section(out, "meta", _canonical(meta))
    _write_section(out, "vocab", _canonical({
        "id_to_token": bundle.vocab.id_to_token,
        "max_size": bundle.vocab.max_size,
    }))
    _write_section(out, "tags", _canonical({
        channel: tv.id_to_tag for channel, tv in bundle.tag_vocabs.items()
    }))
    _write_section(out, "tensors", _tensor_blob(bundle.tensors))
    Path(path).write_bytes(out.getvalue())


def load_bundle(path: str | Path) -> ModelBundle:
    data = Path(path).read_bytes()
    view = io.BytesIO(data)
    magic = view.read(4)
    if magic != MAGIC:
        raise BundleError(f"{path}: bad magic {magic!r}")
    head = view.read(4)
    if len(head) != 4:
        raise BundleError(f"{path}: truncated header")
    (version,) = struct.unpack("<I", head)
    if version != VERSION:
        raise BundleError(f"{path}: unsupported version {version}")
    sections: dict[str, bytes] = {}
    while True:
        chunk = view.read(4)
        if not chunk:
            break
        if len(chunk) != 4:
            raise BundleError(f"{path}: truncated section header")
        (name_len,) = struct.unpack("<I", chunk)
        name = view.read(name_len).decode("utf-8")
        size_b = view.read(8)
        if len(size_b) != 8:
            raise BundleError(f"{path}: truncated section header")
        (size,) = struct.unpack("<Q", size_b)
        payload = view.read(size)
        if len(payload) != size:
            raise BundleError(f"{path}: truncated section {name!r}")
        sections[name] = payload
    for required in ("meta", "vocab", "tags", "tensors"):
        if required not in sections:
            raise BundleError(f"{path}: missing section {required!r}")
    meta = json.loads(sections["meta"])
    vocab_data = json.loads(sections["vocab"])
    vocab = Vocabulary(max_size=vocab_data["max_size"])
    vocab.id_to_token = list(vocab_data["id_to_token"])
    vocab.token_to_id = {t: i for i, t in enumerate(vocab.id_to_token) if i >= 2}
    tag_vocabs = {}
    for channel, tags in json.loads(sections["tags"]).items():
        tv = TagVocabulary()
        tv.id_to_tag = list(tags)
        tv.tag_to_id = {t: i for i, t in enumerate(tags) if i >= 1}
        tag_vocabs[channel] = tv
    return ModelBundle(
        kind=meta["kind"],
        vocab=vocab,
        tag_vocabs=tag_vocabs,
        config=meta["config"],
        tensors=_read_tensors(sections["tensors"]),
        frozen=list(meta.get("frozen", [])),
    )
