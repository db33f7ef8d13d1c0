"""Model assembly, bundle round-trips, and the end-to-end title pipeline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Node, ParameterStore
from .bundle import ModelBundle
from .chain import (ChainCRF, NaiveTagger, bce_with_logits, crf_nll,
                    decode_compression, naive_tag)
from .corpus import FEATURE_CHANNELS, Paragraph, Sentence, TagVocabulary, Vocabulary
from .encoder import EmbeddingConfig, Embeddings, LSTMEncoder, WindowedEncoder
from .ranker import LanguageModel, rerank
from .selector import SaliencyModel, select_sentence
from .semicrf import (SegmentScorer, Segmentation, mask_to_segmentation,
                      scrf_decode_compression, scrf_kbest, scrf_nll, scrf_viterbi)

DEFAULT_CONFIG = {
    "word_dim": 200,
    "feature_dim": 30,
    "feature_channels": list(FEATURE_CHANNELS),
    "use_pretrained": False,
    "contextual_dim": 0,
    "encoder": "recurrent",   # or "window"
    "hidden": 64,
    "layers": 2,
    "radius": 2,
    "dropout": 0.5,
    "crf_hidden": 64,
    "max_seg_len": 6,
    "len_dim": 30,
    "transition_mode": "bieuo",
    "lm_dim": 64,
    "lm_layers": 2,
    "init_seed": 0,
}


def full_config(overrides: dict | None = None) -> dict:
    config = dict(DEFAULT_CONFIG)
    if overrides:
        unknown = set(overrides) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config.update(overrides)
    return config


def _build_embeddings(config: dict, vocab, tag_vocabs, store, rng,
                      pretrained_path: str | None = None) -> Embeddings:
    emb_config = EmbeddingConfig(
        word_dim=config["word_dim"],
        feature_dim=config["feature_dim"],
        feature_channels=tuple(config["feature_channels"]),
        pretrained_path=pretrained_path,
        use_pretrained=config["use_pretrained"] or pretrained_path is not None,
        contextual_dim=config["contextual_dim"],
    )
    return Embeddings(emb_config, vocab, tag_vocabs, store, rng)


def _build_encoder(config: dict, input_dim: int, store, rng):
    if config["encoder"] == "recurrent":
        return LSTMEncoder(store, input_dim, hidden=config["hidden"],
                           layers=config["layers"], dropout_p=config["dropout"], rng=rng)
    if config["encoder"] == "window":
        return WindowedEncoder(store, input_dim, radius=config["radius"],
                               out_dim=2 * config["hidden"],
                               dropout_p=config["dropout"], rng=rng)
    raise ValueError(f"unknown encoder {config['encoder']!r}")


class CompressorModel:
    """Naive tagger, chain CRF, or SCRF compressor behind one interface."""

    def __init__(self, kind: str, vocab: Vocabulary, tag_vocabs: dict[str, TagVocabulary],
                 config: dict | None = None, pretrained_path: str | None = None):
        if kind not in ("naive", "crf", "scrf"):
            raise ValueError(f"unknown compressor kind {kind!r}")
        self.kind = kind
        self.vocab = vocab
        self.tag_vocabs = tag_vocabs
        self.config = full_config(config)
        self.store = ParameterStore()
        rng = np.random.default_rng(self.config["init_seed"])
        self.embeddings = _build_embeddings(self.config, vocab, tag_vocabs, self.store,
                                            rng, pretrained_path)
        self.encoder = _build_encoder(self.config, self.embeddings.config.input_dim(),
                                      self.store, rng)
        d_h = self.encoder.out_dim
        if kind == "naive":
            self.head = NaiveTagger(self.store, d_h, rng=rng)
        elif kind == "crf":
            self.head = ChainCRF(self.store, d_h, hidden=self.config["crf_hidden"], rng=rng)
        else:
            self.head = SegmentScorer(self.store, d_h,
                                      max_len=self.config["max_seg_len"],
                                      len_dim=self.config["len_dim"],
                                      transition_mode=self.config["transition_mode"],
                                      rng=rng)

    @property
    def max_seg_len(self) -> int:
        return self.config["max_seg_len"]

    def encode(self, sentence: Sentence, training: bool = False, rng=None,
               contextual: np.ndarray | None = None) -> Node:
        embedded = self.embeddings.embed(sentence, contextual=contextual)
        return self.encoder.encode(embedded, training=training, rng=rng)

    def loss(self, sentence: Sentence, rng=None) -> Node:
        if sentence.keep_labels is None:
            raise ValueError("sentence has no keep labels")
        training = rng is not None
        h = self.encode(sentence, training=training, rng=rng)
        if self.kind == "naive":
            return bce_with_logits(self.head.logits(h), sentence.keep_labels)
        if self.kind == "crf":
            return crf_nll(self.head.potentials(h), sentence.keep_labels)
        gold = mask_to_segmentation(sentence.keep_labels, self.max_seg_len)
        return scrf_nll(h, self.head, gold)

    def decode(self, sentence: Sentence, contextual=None) -> list[int]:
        """Keep mask with the non-empty guard applied."""
        h = self.encode(sentence, contextual=contextual)
        if self.kind == "naive":
            return naive_tag(self.head.probabilities(h).value)
        if self.kind == "crf":
            return decode_compression(self.head.potentials(h))
        return scrf_decode_compression(h, self.head)

    def kbest(self, sentence: Sentence, k: int,
              contextual=None) -> list[tuple[Segmentation, float]]:
        h = self.encode(sentence, contextual=contextual)
        if self.kind == "scrf":
            return scrf_kbest(h, self.head, k)
        mask = self.decode(sentence, contextual=contextual)
        seg = mask_to_segmentation(mask, max(self.max_seg_len, len(mask)))
        return [(seg, 0.0)]

    def viterbi(self, sentence: Sentence, contextual=None):
        if self.kind != "scrf":
            raise ValueError("viterbi segmentation requires the scrf compressor")
        return scrf_viterbi(self.encode(sentence, contextual=contextual), self.head)

    def to_bundle(self) -> ModelBundle:
        return ModelBundle(self.kind, self.vocab, self.tag_vocabs, self.config,
                           self.store.state_arrays(), frozen=sorted(self.store.frozen))

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "CompressorModel":
        model = cls(bundle.kind, bundle.vocab, bundle.tag_vocabs, bundle.config)
        model.store.load_arrays(bundle.tensors)
        return model


class SelectorBundleModel:
    """Saliency selector wrapped with its vocabularies and config."""

    def __init__(self, vocab: Vocabulary, tag_vocabs: dict[str, TagVocabulary],
                 config: dict | None = None, pretrained_path: str | None = None):
        self.kind = "selector"
        self.vocab = vocab
        self.tag_vocabs = tag_vocabs
        self.config = full_config(config)
        self.store = ParameterStore()
        rng = np.random.default_rng(self.config["init_seed"])
        embeddings = _build_embeddings(self.config, vocab, tag_vocabs, self.store,
                                       rng, pretrained_path)
        encoder = _build_encoder(self.config, embeddings.config.input_dim(),
                                 self.store, rng)
        self.model = SaliencyModel(self.store, embeddings, encoder, rng=rng)

    def loss(self, paragraph: Paragraph, rng=None) -> Node:
        return self.model.loss(paragraph, rng=rng, training=rng is not None)

    def select(self, paragraph: Paragraph, contextual=None) -> int:
        return select_sentence(paragraph, self.model, contextual=contextual)

    def to_bundle(self) -> ModelBundle:
        return ModelBundle("selector", self.vocab, self.tag_vocabs, self.config,
                           self.store.state_arrays(), frozen=sorted(self.store.frozen))

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "SelectorBundleModel":
        model = cls(bundle.vocab, bundle.tag_vocabs, bundle.config)
        model.store.load_arrays(bundle.tensors)
        return model


class RankerModel:
    """Bidirectional LM wrapped for bundling."""

    def __init__(self, vocab: Vocabulary, tag_vocabs: dict[str, TagVocabulary] | None = None,
                 config: dict | None = None):
        self.kind = "lm"
        self.vocab = vocab
        self.tag_vocabs = tag_vocabs or {}
        self.config = full_config(config)
        self.store = ParameterStore()
        rng = np.random.default_rng(self.config["init_seed"])
        self.lm = LanguageModel(self.store, vocab, dim=self.config["lm_dim"],
                                layers=self.config["lm_layers"], rng=rng)

    def loss(self, token_ids: list[int], rng=None) -> Node:
        return self.lm.loss(token_ids)

    def to_bundle(self) -> ModelBundle:
        return ModelBundle("lm", self.vocab, self.tag_vocabs, self.config,
                           self.store.state_arrays(), frozen=sorted(self.store.frozen))

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "RankerModel":
        model = cls(bundle.vocab, bundle.tag_vocabs, bundle.config)
        model.store.load_arrays(bundle.tensors)
        return model


@dataclass
class TitleResult:
    record_id: str
    sentence_index: int
    title: list[str]
    keep_mask: list[int]


def compress_sentence(compressor: CompressorModel, sentence: Sentence,
                      ranker: RankerModel | None = None, k: int = 10,
                      lam: float = 0.1, alpha: float = 0.6,
                      contextual=None) -> tuple[list[int], list[str]]:
    """Decode one sentence; the SCRF route goes through K-best + reranking."""
    surfaces = sentence.surfaces()
    if compressor.kind == "scrf" and ranker is not None:
        candidates = compressor.kbest(sentence, k, contextual=contextual)
        token_ids = [compressor.vocab.lookup(s) for s in surfaces]
        try:
            best, _ = rerank(candidates, surfaces, token_ids, ranker.lm, lam, alpha)
        except ValueError:  # every candidate empty: fall back to the guarded decode
            mask = compressor.decode(sentence, contextual=contextual)
            return mask, [s for s, m in zip(surfaces, mask) if m]
        mask = best.segmentation.to_mask()
        return mask, best.text
    mask = compressor.decode(sentence, contextual=contextual)
    return mask, [s for s, m in zip(surfaces, mask) if m]


def generate_title(paragraph: Paragraph, selector: SelectorBundleModel | None,
                   compressor: CompressorModel, ranker: RankerModel | None = None,
                   k: int = 10, lam: float = 0.1, alpha: float = 0.6) -> TitleResult:
    """Select the most salient sentence, compress it, render the title."""
    idx = selector.select(paragraph) if selector is not None else 0
    sentence = paragraph.sentences[idx]
    mask, title = compress_sentence(compressor, sentence, ranker, k=k, lam=lam, alpha=alpha)
    return TitleResult(paragraph.record_id, idx, title, mask)
