"""Command-line entry point: sample / train / eval / decode / check /
experiment workflows."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import kernels
from .checks import decoder_oracle_check, episode_gradient_check
from .corpus import (BioParseError, EmbeddingFormatError, SyntheticEmbedder,
                     load_embeddings, parse_bio)
from .decoder import DecoderConfig, decode_stream
from .episodes import (EpisodeSpec, InfeasibleSamplingError, read_episodes,
                       sample_episodes, write_episodes)
from .evaluation import evaluate
from .experiments import run_experiment
from .model_io import ModelFormatError, load_model, save_model
from .nn import Parameters
from .spans import PipelineConfig
from .training import TrainConfig, TrainingDivergedError, train

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2

_USER_ERRORS = (FileNotFoundError, IsADirectoryError, PermissionError,
                BioParseError, EmbeddingFormatError, InfeasibleSamplingError,
                ModelFormatError, json.JSONDecodeError, ValueError, KeyError)


def _default_seed(value) -> int:
    if value is not None:
        return int(value)
    return int(os.environ.get("SPANMATCH_SEED", "0"))


def _load_corpus(path):
    """BIO file or episode JSONL; episode files contribute their sentences."""
    with open(path, encoding="utf-8") as fh:
        head = fh.read(1)
    if head == "{":
        with open(path, encoding="utf-8") as fh:
            episodes = read_episodes(fh)
        seen = {}
        for ep in episodes:
            for sent in ep.support + ep.queries:
                seen.setdefault(sent.id, sent)
        return list(seen.values())
    with open(path, encoding="utf-8") as fh:
        return parse_bio(fh)


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _build_store(args, config: dict, required_dim=None):
    if args.embeddings:
        store = load_embeddings(args.embeddings)
        if required_dim is not None and store.dim != required_dim:
            raise ValueError(f"embedding dim {store.dim} does not match model d_w "
                             f"{required_dim}")
        return store
    syn = dict(config.get("synthetic", {}))
    syn.setdefault("dim", required_dim or config.get("pipeline", {}).get("d_w", 32))
    syn.setdefault("seed", _default_seed(getattr(args, "seed", None)))
    return SyntheticEmbedder(**syn)


def _decoder_from_args(args) -> DecoderConfig:
    return DecoderConfig(
        beam_size=args.beam_size, filter_threshold=args.delta,
        iou_threshold=args.k, decay=args.u, mode=args.post,
        path_combiner=args.path_combiner)


def _add_decoder_flags(parser):
    parser.add_argument("--post", choices=("bsnms", "softnms", "beam", "none"),
                        default="bsnms", help="conflict resolution mode")
    parser.add_argument("--beam-size", type=int, default=5)
    parser.add_argument("--delta", type=float, default=0.1,
                        help="filter threshold for decayed scores")
    parser.add_argument("--k", type=float, default=1e-5,
                        help="IoU threshold that counts as a conflict")
    parser.add_argument("--u", type=float, default=1e-5,
                        help="multiplicative decay ratio per conflict")
    parser.add_argument("--path-combiner", choices=("sum", "product"), default="sum")


def cmd_sample(args) -> int:
    corpus = _load_corpus(args.data)
    shot_mode = {"exact": "exact", "k2k": "k-2k"}[args.shot_mode]
    spec = EpisodeSpec(args.n, args.k, shot_mode, args.query_count,
                       _default_seed(args.seed))
    episodes = sample_episodes(corpus, spec, args.episodes)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_episodes(episodes, fh)
    print(f"wrote {len(episodes)} episodes to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args.config)
    with open(args.episodes, encoding="utf-8") as fh:
        episodes = read_episodes(fh)
    if not episodes:
        raise ValueError(f"{args.episodes}: no episodes")
    store = _build_store(args, config)
    pipe = dict(config.get("pipeline", {}))
    pipe.setdefault("d_w", store.dim)
    cfg = PipelineConfig(**pipe)
    if store.dim != cfg.d_w:
        raise ValueError(f"embedding dim {store.dim} != configured d_w {cfg.d_w}")
    seed = _default_seed(args.seed)
    tr = dict(config.get("train", {}))
    tcfg = TrainConfig(lr=float(tr.get("lr", 5e-4)), grad_clip=tr.get("grad_clip"),
                       seed=seed)
    params = Parameters.init(cfg.d_w, cfg.d, cfg.d_ff, np.random.default_rng(seed))
    result = train(episodes, store, params, cfg, tcfg, log=print)
    save_model(args.out_model, result.params, cfg)
    if args.loss_curve:
        with open(args.loss_curve, "w", encoding="utf-8") as fh:
            json.dump(result.losses, fh)
            fh.write("\n")
    print(f"trained {len(episodes)} episodes; final loss {result.losses[-1]:.6f}; "
          f"model saved to {args.out_model}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, cfg = load_model(args.model)
    with open(args.episodes, encoding="utf-8") as fh:
        episodes = read_episodes(fh)
    store = _build_store(args, _load_config(args.config), required_dim=cfg.d_w)
    decoder = _decoder_from_args(args)
    report = evaluate(episodes, store, params, cfg, decoder, style=args.style,
                      episodes_per_batch=args.snips_batch, threads=args.threads)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(include_timing=args.timing), fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
    print(report.summary())
    return EXIT_OK


def cmd_decode(args) -> int:
    decoder = _decoder_from_args(args)
    with open(args.input, encoding="utf-8") as instream, \
            open(args.output, "w", encoding="utf-8") as outstream:
        n = decode_stream(instream, outstream, decoder)
    print(f"decoded {n} records")
    return EXIT_OK


def cmd_check(args) -> int:
    failed = False
    run_grad = args.gradients or args.all
    run_oracle = args.decoder_oracle is not None or args.all
    if not (run_grad or run_oracle):
        raise ValueError("nothing to check: pass --gradients, --decoder-oracle or --all")
    if run_grad:
        start = time.perf_counter()
        err, compared = episode_gradient_check()
        ok = err < 1e-4
        failed |= not ok
        print(f"gradients: max rel error {err:.3e} over {compared} entries "
              f"in {time.perf_counter() - start:.1f}s -> {'ok' if ok else 'FAIL'}")
    if run_oracle:
        n = args.decoder_oracle if args.decoder_oracle else 500
        start = time.perf_counter()
        mismatches, total = decoder_oracle_check(instances=n)
        ok = mismatches == 0
        failed |= not ok
        print(f"decoder-oracle: {total - mismatches}/{total} matches "
              f"in {time.perf_counter() - start:.1f}s -> {'ok' if ok else 'FAIL'}")
    if args.all:
        print("check: FAILED" if failed else "check: all suites passed")
    return EXIT_INTERNAL if failed else EXIT_OK


def cmd_experiment(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    json_out = open(args.json_report, "w", encoding="utf-8") if args.json_report else None
    try:
        results = run_experiment(manifest, json_out=json_out, text_out=sys.stdout)
    finally:
        if json_out:
            json_out.close()
    any_error = any("errors" in cell for cell in results["cells"].values())
    return EXIT_INTERNAL if any_error else EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are user errors, not internal
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spanmatch",
        description="Few-shot span labeling over frozen token embeddings")
    parser.add_argument("--backend", choices=("auto", "numba", "numpy"),
                        default=None, help="numeric kernel backend override")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="sample N-way K-shot episodes from a corpus")
    p.add_argument("--data", required=True, help="BIO file or episode JSONL")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--shot-mode", choices=("exact", "k2k"), default="k2k")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--query-count", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("train", help="meta-train on an episode file")
    p.add_argument("--episodes", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--embeddings", help="embedding interchange JSONL")
    group.add_argument("--synthetic", action="store_true",
                       help="use the deterministic synthetic embedder")
    p.add_argument("--config", help="JSON hyperparameter file")
    p.add_argument("--out-model", required=True)
    p.add_argument("--loss-curve", help="write per-episode losses as JSON")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on episodes")
    p.add_argument("--model", required=True)
    p.add_argument("--episodes", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--embeddings")
    group.add_argument("--synthetic", action="store_true")
    p.add_argument("--config", help="JSON config (synthetic embedder settings)")
    p.add_argument("--style", choices=("fewnerd", "snips"), default="fewnerd")
    p.add_argument("--snips-batch", type=int, default=1,
                   help="episodes per batch for snips-style averaging")
    p.add_argument("--report", help="write EvalReport JSON here")
    p.add_argument("--timing", action="store_true",
                   help="include per-task wall-clock times in the report")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, default=None)
    _add_decoder_flags(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("decode", help="decode a scored-span JSONL stream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_decoder_flags(p)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("check", help="run self-verification suites")
    p.add_argument("--gradients", action="store_true")
    p.add_argument("--decoder-oracle", type=int, nargs="?", const=500, default=None,
                   metavar="N", help="random instances to compare (default 500)")
    p.add_argument("--all", action="store_true")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("experiment", help="run a manifest of experiment cells")
    p.add_argument("--manifest", required=True)
    p.add_argument("--json-report")
    p.set_defaults(fn=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.backend:
        kernels.use_backend(args.backend)
    try:
        return args.fn(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
