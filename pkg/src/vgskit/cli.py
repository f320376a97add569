"""Command-line entry point wiring every pipeline stage.

One subcommand per operation, machine-readable ``--format jsonl`` output
(one record per metric), and a fixed exit-code contract: 0 success, 1
validation error, 2 I/O error.  All numeric output is printed with six
significant digits, and repeated runs with identical flags and inputs
produce byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import featstore, losses, masking, quantize, retrieval, semantic, unitlm
from .abx import abx_error
from .exceptions import FeatureFormatError, ManifestError, ToolkitError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _UsageError(Exception):
    """Argument-parsing failure carrying the usage text."""

    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # raise instead of argparse's exit(2)
        raise _UsageError(message, self.format_usage())


def _fmt(value) -> str:
    return f"{float(value):.6g}"


def _emit(records, fmt: str) -> None:
    for name, value in records:
        if fmt == "jsonl":
            print(json.dumps({"metric": name, "value": float(_fmt(value))}, sort_keys=True))
        else:
            print(f"{name} = {_fmt(value)}")


def _load_frames(path) -> dict[str, featstore.FrameSequence]:
    p = Path(path)
    if p.is_dir():
        return featstore.load_feature_dir(p)
    arr = featstore.read_features(p)
    if arr.ndim == 1:
        arr = arr[None, :]
    return {p.stem: featstore.FrameSequence(arr, utterance_id=p.stem)}


def _read_scores(path) -> list[float]:
    scores = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                if line.startswith("{"):
                    obj = json.loads(line)
                    key = "pseudo_logprob" if "pseudo_logprob" in obj else "value"
                    scores.append(float(obj[key]))
                else:
                    scores.append(float(line))
            except (ValueError, KeyError, json.JSONDecodeError) as e:
                raise ManifestError(f"{path}:{lineno}: cannot parse score") from e
    return scores


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


# subcommand handlers: each returns a list of (metric, value) pairs


def _cmd_loss_check(args) -> list:
    rng = np.random.default_rng(args.seed)
    batch, dim = args.batch, args.dim
    worst_matching = 0.0
    worst_audio = 0.0
    worst_diversity = 0.0
    for _ in range(args.trials):
        s = 3.0 * rng.standard_normal((batch, batch))
        mask = 1.0 - np.eye(batch)
        margin = float(rng.uniform(0.0, 2.0))
        _, grad = losses.matching_loss(s, mask, margin=margin)
        err = losses.finite_difference_check(
            lambda v: losses.matching_loss(v.reshape(batch, batch), mask, margin=margin)[0],
            s.ravel(), grad.ravel())
        worst_matching = max(worst_matching, err)

        c = rng.standard_normal(dim)
        q = rng.standard_normal(dim)
        d = rng.standard_normal((args.distractors, dim))
        temp = float(rng.uniform(0.1, 1.0))
        _, gc, gq, gd = losses.cosine_contrastive_loss(c, q, d, temp)

        def audio_flat(v, temp=temp):
            vc = v[:dim]
            vq = v[dim : 2 * dim]
            vd = v[2 * dim :].reshape(args.distractors, dim)
            return losses.cosine_contrastive_loss(vc, vq, vd, temp)[0]

        err = losses.finite_difference_check(
            audio_flat, np.concatenate([c, q, d.ravel()]),
            np.concatenate([gc, gq, gd.ravel()]))
        worst_audio = max(worst_audio, err)

        p = rng.dirichlet(np.full(args.entries, 2.0), size=args.groups)
        p = np.clip(p, 5e-3, None)
        p /= p.sum(axis=1, keepdims=True)
        _, gp = losses.diversity_loss(p)
        err = losses.finite_difference_check(
            lambda v: losses.diversity_loss(v.reshape(args.groups, args.entries),
                                            validate=False)[0],
            p.ravel(), gp.ravel())
        worst_diversity = max(worst_diversity, err)

    closed, _ = losses.matching_loss(
        np.array([[2.0, 0.0], [0.0, 2.0]]), np.array([[0.0, 1.0], [1.0, 0.0]]), margin=0.0)
    matching_residual = abs(closed - 4.0 * np.log1p(np.exp(-2.0)))
    uniform = np.full((2, 4), 0.25)
    div, _ = losses.diversity_loss(uniform)
    diversity_residual = abs(div - (-np.log(4.0) / 4.0))
    single, _, _, _ = losses.cosine_contrastive_loss(
        np.ones(4), np.ones(4), np.empty((0, 4)), 0.1)
    return [
        ("matching_grad_max_rel_err", worst_matching),
        ("audio_grad_max_rel_err", worst_audio),
        ("diversity_grad_max_rel_err", worst_diversity),
        ("matching_closed_form_residual", matching_residual),
        ("diversity_uniform_residual", diversity_residual),
        ("single_candidate_contrastive_loss", single),
    ]


def _cmd_retrieve(args) -> list:
    manifest = featstore.PairManifest.from_jsonl(args.manifest)
    captions = featstore.read_features(args.queries)
    images = featstore.read_features(args.targets)
    if captions.ndim != 2 or images.ndim != 2:
        raise ManifestError("query and target files must hold rank-2 matrices")
    if captions.shape[0] != len(manifest):
        raise ManifestError(
            f"{captions.shape[0]} query rows but {len(manifest)} manifest captions")
    if images.shape[0] != len(manifest.image_ids):
        raise ManifestError(
            f"{images.shape[0]} target rows but {len(manifest.image_ids)} manifest images")
    table = None
    if args.fine_scores:
        table = featstore.read_features(args.fine_scores)
        if table.shape != (captions.shape[0], images.shape[0]):
            raise ManifestError(
                f"fine score table shape {table.shape} != (captions, images)")

    depth = args.n
    records = []
    for direction, queries, targets in (
        ("speech_to_image", captions, images),
        ("image_to_speech", images, captions),
    ):
        if table is not None:
            fine = retrieval.TableFineScorer(table if direction == "speech_to_image" else table.T)
        else:
            fine = retrieval.DotProductFineScorer(queries, targets)
        ranked = retrieval.ctf_retrieve(queries, targets, fine, args.kc, depth)
        for n in (1, 5, 10):
            if n <= depth:
                r = retrieval.recall_at_n(ranked, manifest, n, direction=direction)
                records.append((f"r_at_{n}_{direction}", r))
        records.append((f"fine_calls_{direction}", fine.call_count))
    return records


def _cmd_abx(args) -> list:
    features = _load_frames(args.features)
    triplets = featstore.read_triplets(args.triplets)
    report = abx_error(triplets, features, weighted=args.weighted, n_jobs=args.threads)
    records = [(f"abx_error[{key}]", err) for key, err in report.group_errors.items()]
    records.append(("abx_error_overall", report.overall))
    records.append(("n_triples", report.n_triples))
    return records


def _cmd_semantic(args) -> list:
    features = _load_frames(args.features)
    judgments = featstore.read_judgments(args.judgments)
    score = semantic.semantic_score(judgments, features, mode=args.pool)
    return [("semantic_score", score), ("n_pairs", len(judgments))]


def _cmd_kmeans_fit(args) -> list:
    frames = _load_frames(args.features)
    data = np.vstack([fs.matrix for _, fs in sorted(frames.items())])
    model = quantize.kmeans_fit(data, n_clusters=args.k, max_iter=args.max_iters,
                                seed=args.seed)
    quantize.save_kmeans(model, args.out)
    return [
        ("kmeans_inertia", model.inertia_),
        ("kmeans_iterations", model.n_iter_),
        ("n_points", data.shape[0]),
    ]


def _cmd_quantize(args) -> list:
    model = quantize.load_kmeans(args.model)
    frames = _load_frames(args.features)
    sequences = [quantize.kmeans_quantize(model, fs) for _, fs in sorted(frames.items())]
    featstore.write_unit_sequences(sequences, args.out)
    return [
        ("n_utterances", len(sequences)),
        ("n_frames", sum(len(s) for s in sequences)),
    ]


def _cmd_mask_stats(args) -> list:
    spec = masking.MaskSpec(start_prob=args.p, span_len=args.span_len, mode=args.mode)
    fractions = []
    for child in _child_seeds(args.seed, args.trials):
        mask = masking.sample_mask(args.length, replace(spec, seed=child))
        fractions.append(mask.mean())
    fractions = np.asarray(fractions)
    return [
        ("masked_fraction_mean", fractions.mean()),
        ("masked_fraction_min", fractions.min()),
        ("masked_fraction_max", fractions.max()),
        ("expected_fraction", masking.expected_masked_fraction(spec)),
        ("n_trials", args.trials),
    ]


def _cmd_lm_train(args) -> list:
    sequences = featstore.read_unit_sequences(args.units)
    lm = unitlm.ngram_train(sequences, order=args.order, add_k=args.add_k)
    lm.save(args.out)
    return [
        ("vocab_size", lm.vocab_size_),
        ("n_sequences", lm.n_sequences_),
    ]


def _cmd_pseudo_prob(args) -> list:
    lm = unitlm.NGramUnitLM.load(args.lm)
    sequences = featstore.read_unit_sequences(args.units)
    if not sequences:
        raise ManifestError(f"{args.units}: no unit sequences")
    base = unitlm.SpanSpec(mean_len=args.span_mean, std_len=args.span_std,
                           coverage=args.coverage)
    seeds = _child_seeds(args.seed, len(sequences))
    scores = [
        unitlm.pseudo_logprob_repeated(lm, seq, replace(base, seed=child), repeats=args.repeats)
        for seq, child in zip(sequences, seeds)
    ]
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            for seq, score in zip(sequences, scores):
                f.write(json.dumps(
                    {"pseudo_logprob": float(_fmt(score)), "utterance_id": seq.utterance_id},
                    sort_keys=True) + "\n")
    return [
        ("mean_pseudo_logprob", float(np.mean(scores))),
        ("n_utterances", len(scores)),
    ]


def _cmd_score_pairs(args) -> list:
    pos = _read_scores(args.pos)
    neg = _read_scores(args.neg)
    acc = unitlm.paired_accuracy(pos, neg)
    return [("paired_accuracy", acc), ("n_pairs", len(pos))]


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("human", "jsonl"), default="human",
                        help="output format (default: human)")
    common.add_argument("--seed", type=int, default=42,
                        help="global random seed (default: 42)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker cap for parallel evaluation")

    parser = _Parser(prog="vgskit",
                     description="Cross-modal retrieval and zero-resource evaluation toolkit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("loss-check", parents=[common],
                       help="finite-difference check of the loss gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--distractors", type=int, default=5)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--entries", type=int, default=4)
    p.set_defaults(handler=_cmd_loss_check)

    p = sub.add_parser("retrieve", parents=[common],
                       help="coarse-to-fine retrieval recall on a pair manifest")
    p.add_argument("--queries", required=True, help="caption embeddings (.fvf)")
    p.add_argument("--targets", required=True, help="image embeddings (.fvf)")
    p.add_argument("--manifest", required=True, help="caption/image pairs (.jsonl)")
    p.add_argument("--kc", type=int, required=True, help="coarse candidate pool size")
    p.add_argument("--n", type=int, default=10, help="ranked depth (default: 10)")
    p.add_argument("--fine-scores", default=None,
                   help="precomputed fine score table (.fvf); dot product if omitted")
    p.set_defaults(handler=_cmd_retrieve)

    p = sub.add_parser("abx", parents=[common],
                       help="phonetic discriminability over a triplet manifest")
    p.add_argument("--features", required=True, help="directory of .fvf frame files")
    p.add_argument("--triplets", required=True, help="triplet manifest (.jsonl)")
    p.add_argument("--weighted", action="store_true",
                   help="weight the overall error by triple counts")
    p.set_defaults(handler=_cmd_abx)

    p = sub.add_parser("semantic", parents=[common],
                       help="rank correlation against human similarity judgments")
    p.add_argument("--features", required=True, help="directory of .fvf frame files")
    p.add_argument("--judgments", required=True, help="judgment records (.jsonl)")
    p.add_argument("--pool", choices=semantic.POOL_MODES, default="mean")
    p.set_defaults(handler=_cmd_semantic)

    p = sub.add_parser("kmeans-fit", parents=[common],
                       help="fit the k-means unit quantizer")
    p.add_argument("--features", required=True, help=".fvf file or directory")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--out", required=True, help="model output path (.fvf)")
    p.set_defaults(handler=_cmd_kmeans_fit)

    p = sub.add_parser("quantize", parents=[common],
                       help="map frames to discrete units with a fitted model")
    p.add_argument("--features", required=True, help=".fvf file or directory")
    p.add_argument("--model", required=True, help="fitted k-means model (.fvf)")
    p.add_argument("--out", required=True, help="unit sequence output file")
    p.set_defaults(handler=_cmd_quantize)

    p = sub.add_parser("mask-stats", parents=[common],
                       help="empirical masked-fraction statistics for a span spec")
    p.add_argument("--length", type=int, default=10000)
    p.add_argument("--p", type=float, default=0.065, help="span start probability")
    p.add_argument("--span-len", type=int, default=10)
    p.add_argument("--mode", choices=masking.MASK_MODES, default="per_utterance")
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(handler=_cmd_mask_stats)

    p = sub.add_parser("lm-train", parents=[common],
                       help="train the n-gram unit language model")
    p.add_argument("--units", required=True, help="unit sequence file")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--add-k", type=float, default=1.0)
    p.add_argument("--out", required=True, help="model output path")
    p.set_defaults(handler=_cmd_lm_train)

    p = sub.add_parser("pseudo-prob", parents=[common],
                       help="span-factored pseudo log-probabilities per utterance")
    p.add_argument("--lm", required=True, help="trained language model path")
    p.add_argument("--units", required=True, help="unit sequence file")
    p.add_argument("--out", default=None, help="per-utterance jsonl output")
    p.add_argument("--span-mean", type=float, default=5.0)
    p.add_argument("--span-std", type=float, default=5.0)
    p.add_argument("--coverage", type=float, default=0.5)
    p.add_argument("--repeats", type=int, default=1,
                   help="span samplings averaged per utterance (default: 1)")
    p.set_defaults(handler=_cmd_pseudo_prob)

    p = sub.add_parser("score-pairs", parents=[common],
                       help="paired accuracy of positive vs negative scores")
    p.add_argument("--pos", required=True, help="positive scores, one per line")
    p.add_argument("--neg", required=True, help="negative scores, one per line")
    p.set_defaults(handler=_cmd_score_pairs)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(e.usage.rstrip(), file=sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if getattr(args, "command", None) is None:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print("error: a subcommand is required", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        records = args.handler(args)
    except (FeatureFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ToolkitError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    _emit(records, args.format)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
