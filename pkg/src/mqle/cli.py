"""Command-line interface.

Subcommands mirror the pipeline stages; ``pipeline`` chains them all. Exit
codes: 0 success, 2 usage error, 3 data error, 4 numerical failure. The
MQLE_SEED environment variable supplies the seed when neither the config file
nor --seed does.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, parse_config
from .errors import DataError, NumericalError, UsageError
from .pipeline import (
    RunDir,
    run_pipeline,
    stage_describe,
    stage_embed,
    stage_encode,
    stage_evaluate,
    stage_expand,
    stage_factorize,
    stage_gmm,
    stage_ingest,
    stage_lda,
    stage_pseudo,
    stage_retrieve,
    stage_split,
    stage_synth,
)
from .synth import SynthSpec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--run", default="run", help="run directory (default: run)")
    parser.add_argument("--config", help="config file (flat key=value lines)")
    parser.add_argument("--seed", type=int, help="override the pipeline seed")
    parser.add_argument("--threads", type=int, help="worker threads (0 = cores)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config field (repeatable)")


def _resolve_config(args) -> PipelineConfig:
    # precedence: --seed > --set > config file > MQLE_SEED > defaults
    config = PipelineConfig()
    if "MQLE_SEED" in os.environ:
        try:
            config.seed = int(os.environ["MQLE_SEED"])
        except ValueError:
            raise UsageError(
                f"MQLE_SEED must be an integer, got {os.environ['MQLE_SEED']!r}"
            )
    if args.config:
        config = load_config(args.config, config)
    if args.set:
        config = parse_config("\n".join(args.set), config)
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    if getattr(args, "lambda_", None) is not None:
        config.topic_lambda = args.lambda_
    if getattr(args, "pool", None) is not None:
        config.pool_mode = args.pool
    if getattr(args, "vocab", None) is not None:
        config.vocab_mode = args.vocab
    config.validate()
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mqle",
        description="Multi-query expansion landmark retrieval engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--landmarks", type=int, default=16)
    p.add_argument("--photos-per-landmark", type=int, default=256)
    p.add_argument("--users", type=int, default=577)
    p.add_argument("--topics", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.6)
    p.add_argument("--bias", type=float, default=0.5)
    p.add_argument("--biased-per-landmark", type=int, default=4)
    p.add_argument("--junk-per-landmark", type=int, default=0)
    p.add_argument("--descriptor-dim", type=int, default=128)
    p.add_argument("--images", action="store_true", help="also rasterize blob images")

    p = sub.add_parser("ingest", help="validate and normalize a manifest")
    _add_common(p)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("split", help="stratified train/validation/test split")
    _add_common(p)

    p = sub.add_parser("describe", help="compute or import per-photo descriptors")
    _add_common(p)
    p.add_argument("--features", help="import an existing feature file")

    p = sub.add_parser("lda", help="fit the topic model over user albums")
    _add_common(p)
    p.add_argument("--lambda", dest="lambda_", type=float,
                   help="candidate-topic threshold")
    p.add_argument("--vocab", choices=["codebook", "photo-id"],
                   help="vocabulary mode")

    p = sub.add_parser("factorize", help="global user-photo factorization")
    _add_common(p)

    p = sub.add_parser("pseudo", help="mint pseudo-classes from photo factors")
    _add_common(p)

    p = sub.add_parser("embed", help="train the pseudo-class embedding")
    _add_common(p)

    p = sub.add_parser("gmm", help="PCA-reduce embeddings and fit the GMM")
    _add_common(p)

    p = sub.add_parser("encode", help="encode the database as Fisher vectors")
    _add_common(p)

    p = sub.add_parser("expand", help="build multi-query sets for the queries")
    _add_common(p)
    p.add_argument("--queries", help="query ids file (default: sampled per landmark)")
    p.add_argument("--lambda", dest="lambda_", type=float)

    p = sub.add_parser("retrieve", help="rank the database for every query")
    _add_common(p)
    p.add_argument("--pool", choices=["fv", "average"])
    p.add_argument("--baseline", choices=["multi", "single", "aqe"], default="multi")
    p.add_argument("--output", choices=["text", "json"], default="text")

    p = sub.add_parser("evaluate", help="AP/mAP/PR report for ranked lists")
    _add_common(p)
    p.add_argument("--pool", choices=["fv", "average"])
    p.add_argument("--baseline", choices=["multi", "single", "aqe"], default="multi")
    p.add_argument("--force", action="store_true",
                   help="accept mixed config hashes")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--queries")
    p.add_argument("--synth", action="store_true",
                   help="generate a synthetic corpus first")
    p.add_argument("--landmarks", type=int, default=16)
    p.add_argument("--photos-per-landmark", type=int, default=256)
    p.add_argument("--users", type=int, default=577)
    p.add_argument("--topics", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.6)
    p.add_argument("--bias", type=float, default=0.5)
    p.add_argument("--biased-per-landmark", type=int, default=4)
    p.add_argument("--junk-per-landmark", type=int, default=0)
    p.add_argument("--descriptor-dim", type=int, default=128)
    p.add_argument("--pool", choices=["fv", "average"])
    p.add_argument("--baseline", choices=["multi", "single", "aqe"], default="multi")
    return parser


def _dispatch(args) -> int:
    config = _resolve_config(args)
    run = RunDir(Path(args.run))

    if args.command == "synth":
        spec = SynthSpec(
            n_landmarks=args.landmarks,
            photos_per_landmark=args.photos_per_landmark,
            n_users=args.users,
            n_topics=args.topics,
            noise_sigma=args.noise,
            bias_strength=args.bias,
            biased_per_landmark=args.biased_per_landmark,
            junk_per_landmark=args.junk_per_landmark,
            descriptor_dim=args.descriptor_dim,
            seed=config.seed,
        )
        result = stage_synth(run, config, spec, rasterize=args.images)
        print(f"synth: {result.corpus.counts()}")
    elif args.command == "ingest":
        corpus = stage_ingest(run, config, args.manifest)
        print(f"ingest: {corpus.counts()}")
    elif args.command == "split":
        split = stage_split(run, config)
        sizes = {
            name: len(split.members(name)) for name in ("train", "validation", "test")
        }
        print(f"split: {sizes}")
    elif args.command == "describe":
        feats = stage_describe(run, config, features_path=args.features)
        print(f"describe: {feats.values.shape[0]} photos x {feats.dim} dims")
    elif args.command == "lda":
        model = stage_lda(run, config)
        print(f"lda: Z={model.n_topics} V={model.vocab_size}")
    elif args.command == "factorize":
        factors = stage_factorize(run, config)
        print(
            f"factorize: {factors.p.shape[0]} users x {factors.v.shape[1]} photos, "
            f"objective {factors.trace[-1]:.6g}"
        )
    elif args.command == "pseudo":
        assignment = stage_pseudo(run, config)
        print(f"pseudo: {assignment.n_classes} classes over {len(assignment.labels)} photos")
    elif args.command == "embed":
        embedded = stage_embed(run, config)
        print(f"embed: {embedded.values.shape[0]} photos x {embedded.dim} dims")
    elif args.command == "gmm":
        gmm = stage_gmm(run, config)
        print(f"gmm: G={gmm.n_components} D={gmm.dim}")
    elif args.command == "encode":
        db = stage_encode(run, config)
        print(f"encode: {db.values.shape[0]} photos x {db.dim} dims")
    elif args.command == "expand":
        expansions = stage_expand(run, config, queries_path=args.queries)
        short = sum(1 for m in expansions.values() if m.short_pool)
        print(f"expand: {len(expansions)} queries ({short} short pools)")
    elif args.command == "retrieve":
        ranked = stage_retrieve(run, config, baseline=args.baseline, output=args.output)
        print(f"retrieve: {len(ranked)} ranked lists ({config.pool_mode}/{args.baseline})")
    elif args.command == "evaluate":
        report = stage_evaluate(run, config, baseline=args.baseline, force=args.force)
        sys.stdout.write(report.render_text())
    elif args.command == "pipeline":
        spec = None
        if args.synth:
            spec = SynthSpec(
                n_landmarks=args.landmarks,
                photos_per_landmark=args.photos_per_landmark,
                n_users=args.users,
                n_topics=args.topics,
                noise_sigma=args.noise,
                bias_strength=args.bias,
                biased_per_landmark=args.biased_per_landmark,
                junk_per_landmark=args.junk_per_landmark,
                descriptor_dim=args.descriptor_dim,
                seed=config.seed,
            )
        report = run_pipeline(
            run,
            config,
            manifest_path=args.manifest,
            features_path=args.features,
            queries_path=args.queries,
            synth_spec=spec,
            baseline=args.baseline,
        )
        sys.stdout.write(report.render_text())
    else:  # pragma: no cover
        raise UsageError(f"unknown command {args.command!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return _dispatch(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
