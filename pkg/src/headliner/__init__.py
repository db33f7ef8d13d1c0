"""Section-title generation: salient-sentence selection plus deletion-based
sentence compression (naive tagger, linear-chain CRF, semi-Markov CRF) with
language-model re-ranking."""

__version__ = "0.1.0"
