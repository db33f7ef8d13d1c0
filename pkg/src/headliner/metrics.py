"""Token-level P/R/F1, ROUGE-1/2/L, and compression-length statistics."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def token_prf(pred: list[int], gold: list[int]) -> tuple[float, float, float]:
    """Precision/recall/F1 over kept positions (label 1 is the positive class)."""
    if len(pred) != len(gold):
        raise ValueError(f"mask lengths differ: {len(pred)} vs {len(gold)}")
    tp = sum(1 for p, g in zip(pred, gold) if p == 1 and g == 1)
    pred_pos = sum(pred)
    gold_pos = sum(gold)
    p = tp / pred_pos if pred_pos else 0.0
    r = tp / gold_pos if gold_pos else 0.0
    return p, r, _f1(p, r)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: list[str], reference: list[str], n: int) -> tuple[float, float, float]:
    """Multiset n-gram overlap; lowercased, no stemming."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngrams([t.lower() for t in candidate], n)
    ref = _ngrams([t.lower() for t in reference], n)
    overlap = sum((cand & ref).values())
    total_cand = sum(cand.values())
    total_ref = sum(ref.values())
    p = overlap / total_cand if total_cand else 0.0
    r = overlap / total_ref if total_ref else 0.0
    return p, r, _f1(p, r)


def _lcs_length(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> tuple[float, float, float]:
    """Longest-common-subsequence ROUGE."""
    if not candidate or not reference:
        return 0.0, 0.0, 0.0
    lcs = _lcs_length([t.lower() for t in candidate], [t.lower() for t in reference])
    p = lcs / len(candidate)
    r = lcs / len(reference)
    return p, r, _f1(p, r)


def length_stats(compressions: list[list]) -> tuple[float, float]:
    """Mean and population stdev of compression token counts."""
    if not compressions:
        raise ValueError("no compressions to measure")
    lengths = np.array([len(c) for c in compressions], dtype=np.float64)
    return float(lengths.mean()), float(lengths.std())


@dataclass
class EvalReport:
    """Corpus-level metrics; P/R/F1 carry mean and stdev over sentences."""

    precision: tuple[float, float] = (0.0, 0.0)
    recall: tuple[float, float] = (0.0, 0.0)
    f1: tuple[float, float] = (0.0, 0.0)
    micro_f1: float = 0.0
    rouge1: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rouge2: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rougeL: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mean_length: float = 0.0
    stdev_length: float = 0.0
    n_examples: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "precision": {"mean": self.precision[0], "stdev": self.precision[1]},
            "recall": {"mean": self.recall[0], "stdev": self.recall[1]},
            "f1": {"mean": self.f1[0], "stdev": self.f1[1]},
            "micro_f1": self.micro_f1,
            "rouge1": dict(zip(("precision", "recall", "f1"), self.rouge1)),
            "rouge2": dict(zip(("precision", "recall", "f1"), self.rouge2)),
            "rougeL": dict(zip(("precision", "recall", "f1"), self.rougeL)),
            "length": {"mean": self.mean_length, "stdev": self.stdev_length},
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        def pm(mean, stdev):
            return f"{100 * mean:.1f} ±{100 * stdev:.1f}"

        lines = [
            f"{'Metric':<12}{'P':>14}{'R':>14}{'F1':>14}{'Length':>14}",
            (f"{'tokens':<12}{pm(*self.precision):>14}{pm(*self.recall):>14}"
             f"{pm(*self.f1):>14}"
             f"{f'{self.mean_length:.1f} ±{self.stdev_length:.1f}':>14}"),
        ]
        for name, triple in (("rouge-1", self.rouge1), ("rouge-2", self.rouge2),
                             ("rouge-L", self.rougeL)):
            p, r, f = triple
            lines.append(f"{name:<12}{100 * p:>14.1f}{100 * r:>14.1f}{100 * f:>14.1f}{'':>14}")
        return "\n".join(lines)


def evaluate_masks(preds: list[list[int]], golds: list[list[int]],
                   surfaces: list[list[str]] | None = None) -> EvalReport:
    """Full report for aligned prediction/gold keep masks.

    F1 is macro-averaged per sentence (micro over tokens also reported);
    ROUGE compares the rendered compressions when surfaces are given.
    """
    if len(preds) != len(golds):
        raise ValueError("prediction and gold counts differ")
    per = np.array([token_prf(p, g) for p, g in zip(preds, golds)])
    tp = sum(sum(1 for a, b in zip(p, g) if a == 1 and b == 1)
             for p, g in zip(preds, golds))
    pred_pos = sum(sum(p) for p in preds)
    gold_pos = sum(sum(g) for g in golds)
    micro_p = tp / pred_pos if pred_pos else 0.0
    micro_r = tp / gold_pos if gold_pos else 0.0
    report = EvalReport(
        precision=(float(per[:, 0].mean()), float(per[:, 0].std())),
        recall=(float(per[:, 1].mean()), float(per[:, 1].std())),
        f1=(float(per[:, 2].mean()), float(per[:, 2].std())),
        micro_f1=_f1(micro_p, micro_r),
        n_examples=len(preds),
    )
    pred_texts = None
    if surfaces is not None:
        pred_texts = [[s for s, m in zip(surf, p) if m]
                      for surf, p in zip(surfaces, preds)]
        gold_texts = [[s for s, m in zip(surf, g) if m]
                      for surf, g in zip(surfaces, golds)]
        rouge_rows = {1: [], 2: [], "L": []}
        for cand, ref in zip(pred_texts, gold_texts):
            rouge_rows[1].append(rouge_n(cand, ref, 1))
            rouge_rows[2].append(rouge_n(cand, ref, 2))
            rouge_rows["L"].append(rouge_l(cand, ref))
        report.rouge1 = tuple(np.array(rouge_rows[1]).mean(axis=0))
        report.rouge2 = tuple(np.array(rouge_rows[2]).mean(axis=0))
        report.rougeL = tuple(np.array(rouge_rows["L"]).mean(axis=0))
        report.mean_length, report.stdev_length = length_stats(pred_texts)
    else:
        report.mean_length, report.stdev_length = length_stats(
            [[i for i, m in enumerate(p) if m] for p in preds])
    return report
