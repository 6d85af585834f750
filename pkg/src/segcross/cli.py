"""Command-line entry point: ``segcross <subcommand> [flags]``.

Exit codes: 0 success, 1 user error (bad flags, unreadable input, invalid
configuration), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import chunker, training
from .container import ContainerError
from .model import VocabularyMismatchError, load_checkpoint
from .textprep import (
    ConfigError,
    RawDocument,
    build_vocab,
    iter_wiki727k,
    paragraph_spans,
    read_jsonl,
    split_sentences,
    to_raw,
    tokenize_document,
    write_jsonl,
)

logger = logging.getLogger("segcross")

USER_ERRORS = (
    ConfigError,
    ContainerError,
    VocabularyMismatchError,
    chunker.EndpointError,
    chunker.UnembeddableError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="segcross", description="Neural text segmentation and semantic chunking.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("train", help="train a segmentation model on canonical JSONL")
    s.add_argument("--data", required=True)
    s.add_argument("--config", help="JSON file with training options")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("eval", help="boundary precision/recall/F1 of one or more models")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True, action="append", help="repeat to compare models")
    s.add_argument("--include-final-boundary", action="store_true")
    s.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("segment", help="predict paragraph boundaries of a text or JSONL file")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--separator", default="newline", help="newline, period or a regular expression")

    s = sub.add_parser("chunk", help="split a document into retrieval chunks")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--max-chunk-chars", type=int, default=1000)
    s.add_argument("--max-depth", type=int, default=8)

    s = sub.add_parser("index", help="embed chunks into a retrieval index")
    s.add_argument("--chunks", required=True)
    s.add_argument("--embedder", choices=["hashed", "external"], default="hashed")
    s.add_argument("--dim", type=int, default=256)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("query", help="retrieve top-k chunks and build a prompt")
    s.add_argument("--index", required=True)
    s.add_argument("--question", required=True)
    s.add_argument("--top-k", type=int, default=4)
    s.add_argument("--template", help="template string or file with {context} and {question}")
    s.add_argument("--complete-endpoint", nargs="?", const="", default=None,
                   help=f"send the prompt for completion (URL, or ${chunker.COMPLETE_URL_ENV})")

    s = sub.add_parser("sweep", help="metrics over several segment lengths M")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--max-len", required=True, type=_csv_ints)
    s.add_argument("--out", required=True)

    s = sub.add_parser("synth", help="write a topic-disjoint synthetic corpus")
    s.add_argument("--topics", type=int, default=2)
    s.add_argument("--docs", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("convert", help="convert a WIKI-727k export to canonical JSONL")
    s.add_argument("--format", required=True, choices=["wiki727k"])
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    return p


# ---------------------------------------------------------------------------


def cmd_train(args, out) -> None:
    raw = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = training.TrainConfig.from_dict(raw)
    docs = read_jsonl(args.data)
    if not docs:
        raise ValueError(f"{args.data}: no documents")
    vocab = build_vocab((s for d in docs for s in d.sentences), cfg.min_freq)
    data = [tokenize_document(d, vocab, cfg.preprocess.L) for d in docs]
    result = training.train(data, cfg, vocab)
    result.checkpoint.save(args.out)
    result.write_loss_log(args.out + ".loss.csv")
    print(f"trained on {len(data)} documents, final loss={result.losses[-1]:.6f}, saved {args.out}", file=out)


def cmd_eval(args, out) -> None:
    docs = read_jsonl(args.data)
    for path in args.model:
        ckpt = load_checkpoint(path)
        data = [ckpt.tokenize(d) for d in docs]
        m = training.evaluate(data, ckpt, args.include_final_boundary, jobs=args.jobs)
        csfm = "on" if ckpt.csfm_enabled else "off"
        print(f"{m.summary()}, tp={m.tp}, fp={m.fp}, fn={m.fn}, csfm={csfm}, model={path}", file=out)


def _separator(spec: str) -> tuple[str, str | None]:
    if spec in ("newline", "period"):
        return spec, None
    return "custom", spec


def cmd_segment(args, out) -> None:
    ckpt = load_checkpoint(args.model)
    path = Path(args.input)
    if path.suffix == ".jsonl":
        docs = [(d.doc_id, d.sentences) for d in read_jsonl(path)]
    else:
        mode, pattern = _separator(args.separator)
        docs = [(path.stem, split_sentences(path.read_text(encoding="utf-8"), mode, pattern))]
    model = ckpt.model()
    for doc_id, sentences in docs:
        doc = ckpt.tokenize(RawDocument(doc_id, sentences, [0] * len(sentences)))
        labels = model.predict_document(doc, ckpt.preprocess)
        rec = {"id": doc_id, "labels": labels, "paragraph_spans": [list(s) for s in paragraph_spans(labels)]}
        print(json.dumps(rec, ensure_ascii=False), file=out)


def cmd_chunk(args, out) -> None:
    ckpt = load_checkpoint(args.model)
    cfg = chunker.ChunkerConfig(max_chunk_chars=args.max_chunk_chars, max_depth=args.max_depth)
    text = Path(args.input).read_text(encoding="utf-8")
    for i, c in enumerate(chunker.split_recursive(text, ckpt, cfg)):
        print(json.dumps({"id": i, **c.to_json()}, ensure_ascii=False), file=out)


def _read_chunks(path) -> list[chunker.Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                chunks.append(chunker.Chunk.from_json(json.loads(line)))
    return chunks


def cmd_index(args, out) -> None:
    kind = "hashed-ngram" if args.embedder == "hashed" else "external-endpoint"
    url = None
    if kind == "external-endpoint":
        url = chunker.EndpointConfig.from_env(chunker.EMBED_URL_ENV).url
    spec = chunker.EmbedderSpec(kind=kind, dim=args.dim, seed=args.seed, url=url)
    index = chunker.RetrievalIndex.build(_read_chunks(args.chunks), spec, jobs=args.jobs)
    index.save(args.out)
    print(f"indexed {len(index)} chunks into {args.out}", file=out)


def cmd_query(args, out) -> None:
    index = chunker.RetrievalIndex.load(args.index)
    template = chunker.DEFAULT_TEMPLATE
    if args.template:
        template = args.template
        if "{context}" not in template and Path(template).is_file():
            template = Path(template).read_text(encoding="utf-8")
    qvec = chunker.embed(args.question, index.spec)
    hits = chunker.retrieve_topk(index, qvec, args.top_k)
    prompt = chunker.assemble_context([index.chunks[i] for i, _ in hits], template, args.question)
    result = {
        "question": args.question,
        "results": [{"chunk_id": i, "score": s, "text": index.chunks[i].text} for i, s in hits],
        "prompt": prompt,
    }
    if args.complete_endpoint is not None:
        endpoint = chunker.EndpointConfig.from_env(chunker.COMPLETE_URL_ENV, args.complete_endpoint or None)
        result["answer"] = chunker.complete(prompt, endpoint)
    print(json.dumps(result, ensure_ascii=False, indent=2), file=out)


def cmd_sweep(args, out) -> None:
    ckpt = load_checkpoint(args.model)
    data = [ckpt.tokenize(d) for d in read_jsonl(args.data)]
    rows = training.sweep_input_length(data, ckpt, args.max_len)
    training.write_sweep_csv(rows, args.out)
    for r in rows:
        line = r.metrics.summary() if r.metrics else r.note
        print(f"M={r.M}: {line}", file=out)


def cmd_synth(args, out) -> None:
    docs = training.synth_corpus(args.docs, args.topics, seed=args.seed)
    write_jsonl((to_raw(d) for d in docs), args.out)
    print(f"wrote {len(docs)} documents to {args.out}", file=out)


def cmd_convert(args, out) -> None:
    docs = list(iter_wiki727k(args.input))
    write_jsonl(docs, args.out)
    print(f"converted {len(docs)} documents to {args.out}", file=out)


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "segment": cmd_segment,
    "chunk": cmd_chunk,
    "index": cmd_index,
    "query": cmd_query,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "convert": cmd_convert,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except USER_ERRORS as exc:
        print(f"segcross {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        logger.exception("internal error")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
