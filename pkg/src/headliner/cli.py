"""Command-line pipeline: gen-synthetic, train, compress, title, eval."""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from .bundle import load_bundle, save_bundle
from .corpus import (CorpusError, Paragraph, align_saliency_labels, assign_vocab_ids,
                     build_tag_vocabularies, build_vocabulary, ingest_corpus)
from .metrics import EvalReport, evaluate_masks, rouge_l, rouge_n
from .pipeline import (CompressorModel, RankerModel, SelectorBundleModel,
                       compress_sentence, full_config, generate_title)
from .ranker import perplexity
from .report import plot_eval_report, plot_training_log
from .trainer import TrainerConfig, train_model

logger = logging.getLogger("headliner")

_TRAINER_DEFAULTS = {
    "selector": {"optimizer": "adam_amsgrad", "lr": 0.003, "l2_weight": 0.001},
    "naive": {"optimizer": "adam_amsgrad", "lr": 0.003, "l2_weight": 0.001},
    "crf": {"optimizer": "adam_amsgrad", "lr": 0.003, "l2_weight": 0.001},
    "scrf": {"optimizer": "adam_amsgrad", "lr": 0.003, "l2_weight": 0.001},
    "lm": {"optimizer": "sgd_momentum", "lr": 0.25, "l2_weight": 0.0},
}


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("HEADLINER_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _split(items: list, dev_fraction: float, seed: int) -> tuple[list, list]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items))
    n_dev = max(1, int(round(dev_fraction * len(items)))) if len(items) > 1 else 0
    dev_idx = set(order[:n_dev].tolist())
    train = [items[i] for i in range(len(items)) if i not in dev_idx]
    dev = [items[i] for i in sorted(dev_idx)]
    return train, dev


@click.group()
def cli():
    """Section-title generation: salient-sentence selection plus
    deletion-based compression."""
    _setup_logging()


@cli.command("gen-synthetic")
@click.option("--schema", type=click.Choice(["compression", "summary"]),
              default="compression", show_default=True)
@click.option("--count", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def gen_synthetic(schema, count, seed, out_path):
    """Generate a rule-based synthetic corpus (keep iff tag = CONTENT,
    first token always kept)."""
    from . import synthetic

    if schema == "compression":
        records = synthetic.gen_compression_records(count, seed=seed)
    else:
        records = synthetic.gen_summary_records(count, seed=seed)
    synthetic.write_jsonl(out_path, records)
    click.echo(f"wrote {len(records)} {schema} records to {out_path}")


def _model_config(file_cfg: dict, seed: int, encoder: str | None,
                  max_seg_len: int | None) -> dict:
    overrides = dict(file_cfg.get("model", {}))
    overrides["init_seed"] = seed
    if encoder is not None:
        overrides["encoder"] = encoder
    if max_seg_len is not None:
        overrides["max_seg_len"] = max_seg_len
    return overrides


def _trainer_config(kind: str, file_cfg: dict, seed: int,
                    max_epochs: int | None) -> TrainerConfig:
    settings = dict(_TRAINER_DEFAULTS[kind])
    settings.update(file_cfg.get("trainer", {}))
    settings["seed"] = seed
    if max_epochs is not None:
        settings["max_epochs"] = max_epochs
    return TrainerConfig(**settings)


@cli.command()
@click.argument("kind", type=click.Choice(["selector", "naive", "crf", "scrf", "lm"]))
@click.argument("corpus_path", type=click.Path(exists=True))
@click.argument("out_path", type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1,
              help="Accepted for interface parity; training is single-threaded.")
@click.option("--encoder", type=click.Choice(["recurrent", "window"]), default=None)
@click.option("--max-seg-len", type=int, default=None)
@click.option("--max-epochs", type=int, default=None)
@click.option("--dev-fraction", type=float, default=0.1, show_default=True)
@click.option("--pretrained", "pretrained_path", type=click.Path(exists=True), default=None,
              help="Plain-text word vector file (one token per line).")
def train(kind, corpus_path, out_path, config_path, seed, threads, encoder,
          max_seg_len, max_epochs, dev_fraction, pretrained_path):
    """Train a model and save it as a bundle, with a CSV log and loss figure."""
    file_cfg = _load_config_file(config_path)
    trainer_cfg = _trainer_config(kind, file_cfg, seed, max_epochs)
    model_cfg = _model_config(file_cfg, seed, encoder, max_seg_len)
    log_path = Path(str(out_path) + ".log.csv")

    if kind == "selector":
        paragraphs = ingest_corpus(corpus_path, "summary")
        for para in paragraphs:
            para.saliency_labels = align_saliency_labels(para)
        train_set, dev_set = _split(paragraphs, dev_fraction, seed)
        vocab = build_vocabulary(train_set)
        tags = build_tag_vocabularies(train_set)
        assign_vocab_ids(paragraphs, vocab)
        model = SelectorBundleModel(vocab, tags, model_cfg, pretrained_path)
        result = train_model(model.store, train_set, model.loss, trainer_cfg,
                             dev_examples=dev_set or None, log_path=log_path)
        final = f"dev loss {result.dev_losses[-1]:.4f}"
    elif kind == "lm":
        paragraphs = ingest_corpus(corpus_path, "compression")
        train_set, dev_set = _split(paragraphs, dev_fraction, seed)
        vocab = build_vocabulary(train_set)
        assign_vocab_ids(paragraphs, vocab)
        tags = build_tag_vocabularies(train_set)
        model = RankerModel(vocab, tags, model_cfg)

        def ids_of(para):
            return [t.vocab_id for t in para.sentences[0].tokens]

        result = train_model(model.store, train_set,
                             lambda p, rng: model.loss(ids_of(p), rng), trainer_cfg,
                             dev_examples=dev_set or None,
                             dev_loss_fn=lambda p: model.loss(ids_of(p)).item(),
                             log_path=log_path)
        final = f"dev perplexity {perplexity(result.dev_losses[-1]):.2f}"
    else:
        paragraphs = ingest_corpus(corpus_path, "compression")
        sentences = []
        for para in paragraphs:
            sent = para.sentences[0]
            if sent.keep_labels is None:
                raise CorpusError(
                    f"record {para.record_id!r} has no keep labels; "
                    f"schema does not match kind {kind!r}")
            sentences.append(sent)
        train_set, dev_set = _split(list(zip(paragraphs, sentences)), dev_fraction, seed)
        vocab = build_vocabulary([p for p, _ in train_set])
        tags = build_tag_vocabularies([p for p, _ in train_set])
        assign_vocab_ids(paragraphs, vocab)
        model = CompressorModel(kind, vocab, tags, model_cfg, pretrained_path)
        result = train_model(model.store, [s for _, s in train_set],
                             lambda s, rng: model.loss(s, rng), trainer_cfg,
                             dev_examples=[s for _, s in dev_set] or None,
                             log_path=log_path)
        if dev_set:
            report = evaluate_masks([model.decode(s) for _, s in dev_set],
                                    [s.keep_labels for _, s in dev_set],
                                    [s.surfaces() for _, s in dev_set])
            final = (f"dev F1 {report.f1[0]:.4f} "
                     f"(P {report.precision[0]:.4f}, R {report.recall[0]:.4f})")
        else:
            final = f"train loss {result.train_losses[-1]:.4f}"

    model.store.snap_float32()
    save_bundle(out_path, model.to_bundle())
    plot_training_log(log_path, Path(str(out_path) + ".loss.png"))
    click.echo(f"trained {kind} for {result.epochs} epochs; {final}")
    click.echo(f"bundle: {out_path}")


def _load_compressor(path) -> CompressorModel:
    b = load_bundle(path)
    if b.kind not in ("naive", "crf", "scrf"):
        raise click.ClickException(f"{path} holds a {b.kind!r} bundle, not a compressor")
    return CompressorModel.from_bundle(b)


def _load_ranker(path) -> RankerModel | None:
    if path is None:
        return None
    b = load_bundle(path)
    if b.kind != "lm":
        raise click.ClickException(f"{path} holds a {b.kind!r} bundle, not a language model")
    return RankerModel.from_bundle(b)


@cli.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--compressor", "compressor_path", type=click.Path(exists=True), required=True)
@click.option("--ranker", "ranker_path", type=click.Path(exists=True), default=None)
@click.option("--lambda", "lam", type=float, default=0.1, show_default=True)
@click.option("--alpha", type=float, default=0.6, show_default=True)
@click.option("--kbest", type=int, default=10, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def compress(input_path, compressor_path, ranker_path, lam, alpha, kbest, out_path):
    """Compress each sentence of a compression-schema corpus."""
    compressor = _load_compressor(compressor_path)
    ranker = _load_ranker(ranker_path)
    paragraphs = ingest_corpus(input_path, "compression")
    with open(out_path, "w", encoding="utf-8") as fh:
        for para in paragraphs:
            sent = para.sentences[0]
            mask, text = compress_sentence(compressor, sent, ranker,
                                           k=kbest, lam=lam, alpha=alpha)
            fh.write(json.dumps({"id": para.record_id, "keep": mask, "text": text},
                                ensure_ascii=False) + "\n")
    click.echo(f"compressed {len(paragraphs)} sentences to {out_path}")


@cli.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--selector", "selector_path", type=click.Path(exists=True), default=None,
              help="Selector bundle; omitted = LEAD-1 (first sentence).")
@click.option("--compressor", "compressor_path", type=click.Path(exists=True), required=True)
@click.option("--ranker", "ranker_path", type=click.Path(exists=True), default=None)
@click.option("--lambda", "lam", type=float, default=0.1, show_default=True)
@click.option("--alpha", type=float, default=0.6, show_default=True)
@click.option("--kbest", type=int, default=10, show_default=True)
@click.option("--threads", type=int, default=1)
@click.option("--out", "out_path", type=click.Path(), required=True)
def title(input_path, selector_path, compressor_path, ranker_path, lam, alpha,
          kbest, threads, out_path):
    """Generate one section title per paragraph of a summary-schema corpus."""
    selector = None
    if selector_path is not None:
        b = load_bundle(selector_path)
        if b.kind != "selector":
            raise click.ClickException(f"{selector_path} holds a {b.kind!r} bundle")
        selector = SelectorBundleModel.from_bundle(b)
    compressor = _load_compressor(compressor_path)
    ranker = _load_ranker(ranker_path)
    paragraphs = ingest_corpus(input_path, "summary")
    with open(out_path, "w", encoding="utf-8") as fh:
        for para in paragraphs:
            result = generate_title(para, selector, compressor, ranker,
                                    k=kbest, lam=lam, alpha=alpha)
            source = para.sentences[result.sentence_index].surfaces()
            _assert_subsequence(result.title, source, para.record_id)
            fh.write(json.dumps({
                "id": result.record_id,
                "sentence_index": result.sentence_index,
                "title": result.title,
            }, ensure_ascii=False) + "\n")
    click.echo(f"wrote {len(paragraphs)} titles to {out_path}")


def _assert_subsequence(title_tokens: list[str], source: list[str], rid: str):
    it = iter(source)
    if not all(tok in it for tok in title_tokens):
        raise click.ClickException(
            f"record {rid!r}: title is not an in-order subsequence of the source")


def _read_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


@cli.command("eval")
@click.argument("pred_path", type=click.Path(exists=True))
@click.argument("gold_path", type=click.Path(exists=True))
@click.option("--schema", type=click.Choice(["compression", "summary"]),
              default="compression", show_default=True)
@click.option("--json", "json_path", type=click.Path(), default=None)
@click.option("--figures", "figures_dir", type=click.Path(), default=None)
def eval_cmd(pred_path, gold_path, schema, json_path, figures_dir):
    """Score predictions against gold; emits a table, JSON, and figures."""
    preds = {str(r["id"]): r for r in _read_jsonl(pred_path)}
    gold = ingest_corpus(gold_path, schema)
    missing = [p.record_id for p in gold if p.record_id not in preds]
    if missing:
        raise click.ClickException(
            f"predictions missing for {len(missing)} ids: {', '.join(missing[:10])}")

    if schema == "compression":
        pred_masks, gold_masks, surfaces = [], [], []
        for para in gold:
            sent = para.sentences[0]
            if sent.keep_labels is None:
                raise click.ClickException(f"record {para.record_id!r} has no gold keep labels")
            pred_masks.append([int(v) for v in preds[para.record_id]["keep"]])
            gold_masks.append(sent.keep_labels)
            surfaces.append(sent.surfaces())
        report = evaluate_masks(pred_masks, gold_masks, surfaces)
        lengths = [sum(m) for m in pred_masks]
    else:
        rows = {1: [], 2: [], "L": []}
        lead = {1: [], 2: [], "L": []}
        lengths = []
        for para in gold:
            if para.summary is None:
                raise click.ClickException(f"record {para.record_id!r} has no summary")
            cand = [str(t) for t in preds[para.record_id]["title"]]
            lengths.append(len(cand))
            rows[1].append(rouge_n(cand, para.summary, 1))
            rows[2].append(rouge_n(cand, para.summary, 2))
            rows["L"].append(rouge_l(cand, para.summary))
            first = para.sentences[0].surfaces()
            lead[1].append(rouge_n(first, para.summary, 1))
            lead[2].append(rouge_n(first, para.summary, 2))
            lead["L"].append(rouge_l(first, para.summary))
        report = EvalReport(n_examples=len(gold))
        report.rouge1 = tuple(np.array(rows[1]).mean(axis=0))
        report.rouge2 = tuple(np.array(rows[2]).mean(axis=0))
        report.rougeL = tuple(np.array(rows["L"]).mean(axis=0))
        report.mean_length = float(np.mean(lengths))
        report.stdev_length = float(np.std(lengths))
        report.extra["lead1"] = {
            "rouge1": dict(zip(("precision", "recall", "f1"),
                               np.array(lead[1]).mean(axis=0).tolist())),
            "rouge2": dict(zip(("precision", "recall", "f1"),
                               np.array(lead[2]).mean(axis=0).tolist())),
            "rougeL": dict(zip(("precision", "recall", "f1"),
                               np.array(lead["L"]).mean(axis=0).tolist())),
        }

    click.echo(report.to_table())
    if json_path is not None:
        Path(json_path).write_text(report.to_json() + "\n", encoding="utf-8")
    if figures_dir is not None:
        for path in plot_eval_report(report, lengths, figures_dir):
            logger.info("wrote figure %s", path)


def main():
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(1)
    except (CorpusError, OSError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
