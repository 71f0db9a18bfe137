"""Command-line entry points tying the pipeline together.

Every command is deterministic given its input files, flags and seeds.
Passing ``--manifest out.json`` records the resolved configuration;
``covagg run-manifest out.json`` replays it and reproduces the outputs
bit-identically.

Exit codes: 0 success, 2 parse/format error, 3 contract error,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio, retrieval
from .angle_map import (
    COSINE_POWER,
    VON_MISES,
    AngleMapConfig,
    fourier_coeffs,
    truncated_kernel,
    vm_kernel,
)
from .codebooks import gmm_train, kmeans_train, pca_train
from .descriptors import DescriptorRecord, preprocess_batch, rootsift_batch
from .errors import ContractError, CovaggError
from .pipeline import FAMILIES, PipelineConfig
from .postprocess import rn_train
from .scoring import query_multi_rotation
from .synth import SynthConfig, generate_corpus

DESCRIPTOR_SUFFIX = ".cvd"


def _collect_descriptor_paths(inputs) -> list:
    """Expand files and directories into a sorted list of descriptor files."""
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            found = sorted(q for q in p.iterdir() if q.is_file())
            if not found:
                raise ContractError(f"directory {p} contains no descriptor files")
            paths.extend(found)
        elif p.is_file():
            paths.append(p)
        else:
            raise ContractError(f"no such file or directory: {p}")
    if not paths:
        raise ContractError("no descriptor files given")
    return paths


def _load_training_matrix(args) -> np.ndarray:
    """Stack descriptors from the training files, preprocessed as requested."""
    paths = _collect_descriptor_paths(args.train_descriptors)
    blocks = []
    for path in paths:
        dset = fileio.read_descriptor_file(path)
        if len(dset) == 0:
            continue
        X = rootsift_batch(dset.descriptors) if dset.raw else dset.descriptors
        blocks.append(np.asarray(X))
    if not blocks:
        raise ContractError("training files contain no descriptors")
    data = np.vstack(blocks)
    if getattr(args, "pca", None):
        pca = fileio.load_model(args.pca)
        data = preprocess_batch(data, pca, args.pca_reduce)
    if getattr(args, "sample", None):
        if args.sample < data.shape[0]:
            rng = np.random.default_rng(args.seed)
            keep = rng.choice(data.shape[0], size=args.sample, replace=False)
            data = data[np.sort(keep)]
    return data


def _write_manifest(args):
    if not getattr(args, "manifest", None):
        return
    payload = {
        key: value
        for key, value in vars(args).items()
        if key not in ("func", "manifest") and not callable(value)
    }
    text = json.dumps({"command": args.command, "args": payload}, indent=2, sort_keys=True)
    fileio.atomic_write_bytes(args.manifest, text.encode("utf-8") + b"\n")


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        family=args.family,
        kappa=args.kappa,
        n_freq=args.nfreq,
        angle_family=args.angle_family.replace("-", "_"),
        cosine_power=args.cosine_power,
        input_dim=args.input_dim,
        pca_path=args.pca,
        pca_reduce=args.pca_reduce,
        codebook_path=args.codebook,
        gmm_path=args.gmm,
        power_law=args.adapted_power_law if args.adapted_power_law is not None else args.power_law,
        skip_power_law=args.no_power_law,
        adapted_power_law=args.adapted_power_law is not None,
        rn_path=args.rn,
        truncate=args.truncate,
        rotations=getattr(args, "rotations", 1),
    )


def _add_pipeline_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("pipeline")
    group.add_argument("--family", required=True, choices=FAMILIES)
    group.add_argument("--kappa", type=float, default=8.0)
    group.add_argument("--nfreq", type=int, default=3)
    group.add_argument(
        "--angle-family", choices=("von-mises", "cosine-power"), default="von-mises"
    )
    group.add_argument("--cosine-power", type=int, default=None, metavar="P")
    group.add_argument(
        "--input-dim", type=int, default=None,
        help="descriptor dim for monomial families when no pca model is given",
    )
    group.add_argument("--pca", default=None, metavar="MODEL")
    group.add_argument(
        "--pca-reduce", action=argparse.BooleanOptionalAction, default=None,
        help="truncate to the pca components (default: yes except for vlad)",
    )
    group.add_argument("--codebook", default=None, metavar="MODEL")
    group.add_argument("--gmm", default=None, metavar="MODEL")
    group.add_argument("--power-law", type=float, default=None, metavar="A")
    group.add_argument(
        "--adapted-power-law", type=float, default=None, metavar="A",
        help="use the pair-modulus power law with this exponent",
    )
    group.add_argument("--no-power-law", action="store_true")
    group.add_argument("--rn", default=None, metavar="MODEL")
    group.add_argument("--truncate", type=int, default=None, metavar="D")


def _add_manifest_flag(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--manifest", default=None, metavar="OUT.json",
        help="record the resolved configuration for exact replay",
    )


def cmd_train_pca(args) -> int:
    _write_manifest(args)
    data = _load_training_matrix(args)
    model = pca_train(data, args.out_dim)
    fileio.save_model(args.out, model)
    print(f"trained pca {model.out_dim}x{model.input_dim} from {data.shape[0]} descriptors -> {args.out}")
    return 0


def cmd_train_kmeans(args) -> int:
    _write_manifest(args)
    data = _load_training_matrix(args)
    model = kmeans_train(data, args.k, max_iter=args.iters, seed=args.seed)
    fileio.save_model(args.out, model)
    print(f"trained k-means k={model.k} d={model.dim} from {data.shape[0]} descriptors -> {args.out}")
    return 0


def cmd_train_gmm(args) -> int:
    _write_manifest(args)
    data = _load_training_matrix(args)
    model = gmm_train(data, args.k, max_iter=args.iters, seed=args.seed)
    fileio.save_model(args.out, model)
    print(f"trained gmm k={model.k} d={model.dim} from {data.shape[0]} descriptors -> {args.out}")
    return 0


def cmd_train_rn(args) -> int:
    _write_manifest(args)
    store = fileio.read_vector_file(args.vectors)
    model = rn_train(store.vectors, exponent=args.exponent, whiten=args.whiten)
    fileio.save_model(args.out, model)
    print(f"trained rn dim={model.dim} from {len(store)} vectors -> {args.out}")
    return 0


def _encode_paths(paths, config: PipelineConfig, jobs: int):
    pipeline = config.build()

    def encode_one(path):
        dset = fileio.read_descriptor_file(path)
        return dset.image_id, pipeline.encode(dset)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(encode_one, paths))
    else:
        results = [encode_one(path) for path in paths]
    return pipeline, results


def cmd_encode(args) -> int:
    _write_manifest(args)
    config = _pipeline_config(args)
    paths = _collect_descriptor_paths(args.descriptors)
    pipeline, results = _encode_paths(paths, config, args.jobs)
    base_dim, n_freq = pipeline.stored_layout()
    fileio.write_vector_file(
        args.out,
        [image_id for image_id, _ in results],
        np.stack([vec for _, vec in results]),
        base_dim=base_dim,
        n_freq=n_freq,
        family=args.family,
    )
    print(f"encoded {len(results)} images ({pipeline.output_dim} dims) -> {args.out}")
    return 0


def cmd_query(args) -> int:
    _write_manifest(args)
    store = fileio.read_vector_file(args.db)
    config = _pipeline_config(args)
    pipeline = config.build()
    query = fileio.read_descriptor_file(args.query_desc)
    scores, thetas = query_multi_rotation(query, pipeline, store.vectors, args.rotations)
    order = sorted(
        range(len(store)), key=lambda i: (-scores[i], store.image_ids[i])
    )
    top = order[: args.top] if args.top else order
    writer = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    writer.writerow(("rank", "image_id", "score", "theta_star"))
    for rank, i in enumerate(top, start=1):
        writer.writerow((rank, store.image_ids[i], f"{scores[i]:.8f}", f"{thetas[i]:.8f}"))
    return 0


def cmd_evaluate(args) -> int:
    _write_manifest(args)
    store = fileio.read_vector_file(args.db)
    ground_truth = retrieval.read_ground_truth(args.gt, exclude_query=args.exclude_query)
    config = _pipeline_config(args)
    pipeline = config.build()
    paths = _collect_descriptor_paths(args.queries)

    def evaluate_one(path):
        query = fileio.read_descriptor_file(path)
        if query.image_id not in ground_truth:
            raise ContractError(f"no ground-truth entry for query {query.image_id!r}")
        scores, _ = query_multi_rotation(query, pipeline, store.vectors, args.rotations)
        ranked = retrieval.rank_by_score(store.image_ids, scores)
        return query.image_id, retrieval.average_precision(ranked, ground_truth[query.image_id])

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(evaluate_one, paths))
    else:
        results = [evaluate_one(path) for path in paths]
    for query_id, ap in results:
        print(f"{query_id}\t{ap:.6f}")
    print(f"mAP\t{retrieval.mean_ap([ap for _, ap in results]):.6f}")
    return 0


def cmd_angle_kernel_dump(args) -> int:
    _write_manifest(args)
    family = args.angle_family.replace("-", "_")
    config = AngleMapConfig(
        kappa=args.kappa,
        n_freq=args.nfreq,
        family=family,
        power=args.cosine_power if family == COSINE_POWER else None,
    )
    coeffs = fourier_coeffs(config)
    if args.grid < 2:
        raise ContractError("grid must have at least 2 points")
    deltas = np.linspace(-np.pi, np.pi, args.grid)
    if family == VON_MISES:
        target = vm_kernel(deltas, args.kappa)
    else:
        target = np.cos(deltas / 2.0) ** config.power
    approx = truncated_kernel(deltas, coeffs)
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(("delta", "k_vm", "k_bar"))
        for d, t, a in zip(deltas, target, approx):
            writer.writerow((f"{d:.10f}", f"{t:.12f}", f"{a:.12f}"))
    finally:
        if args.out:
            out.close()
    return 0


def cmd_sim_hist(args) -> int:
    _write_manifest(args)
    set_a = fileio.read_descriptor_file(args.a)
    set_b = fileio.read_descriptor_file(args.b)
    if len(set_a) != len(set_b):
        raise ContractError(
            f"pair files must have equal record counts, got {len(set_a)} and {len(set_b)}"
        )
    pairs = [
        (
            DescriptorRecord(set_a.descriptors[i], float(set_a.angles[i])),
            DescriptorRecord(set_b.descriptors[i], float(set_b.angles[i])),
        )
        for i in range(len(set_a))
    ]
    family = args.angle_family.replace("-", "_")
    config = AngleMapConfig(
        kappa=args.kappa,
        n_freq=args.nfreq,
        family=family,
        power=args.cosine_power if family == COSINE_POWER else None,
    )
    rows = fileio.similarity_histogram(
        pairs, args.bins, fourier_coeffs(config), value_bins=args.value_bins
    )
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(fileio.SIM_HIST_HEADER)
        for row in rows:
            writer.writerow(row)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_synth(args) -> int:
    _write_manifest(args)
    config = SynthConfig(
        n_queries=args.queries,
        matches_per_query=args.matches,
        n_distractors=args.distractors,
        descriptors_per_image=args.descriptors,
        dim=args.dim,
        shared_fraction=args.shared_fraction,
        noise_sigma=args.noise_sigma,
        angle_jitter=args.angle_jitter,
        seed=args.seed,
    )
    queries, database, ground_truth = generate_corpus(config)
    out_dir = Path(args.out_dir)
    query_dir = out_dir / "queries"
    db_dir = out_dir / "database"
    query_dir.mkdir(parents=True, exist_ok=True)
    db_dir.mkdir(parents=True, exist_ok=True)
    for dset in queries:
        fileio.write_descriptor_file(dset, query_dir / f"{dset.image_id}{DESCRIPTOR_SUFFIX}")
    for dset in database:
        fileio.write_descriptor_file(dset, db_dir / f"{dset.image_id}{DESCRIPTOR_SUFFIX}")
    retrieval.write_ground_truth(out_dir / "groundtruth.txt", ground_truth)
    print(
        f"wrote {len(queries)} queries and {len(database)} database images "
        f"({config.dim}-dim, {config.descriptors_per_image} descriptors each) under {out_dir}"
    )
    return 0


def cmd_run_manifest(args) -> int:
    with open(args.manifest_file, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    command = payload.get("command")
    stored = payload.get("args", {})
    if command not in _HANDLERS:
        raise ContractError(f"manifest names unknown command {command!r}")
    replay = argparse.Namespace(**stored)
    replay.command = command
    replay.manifest = None
    return _HANDLERS[command](replay)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covagg",
        description="Orientation-covariant aggregation of local descriptors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def training_parser(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--train-descriptors", nargs="+", required=True, metavar="PATH",
                       help="held-out training files/dirs, disjoint from evaluation data")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--sample", type=int, default=None,
                       help="subsample this many descriptors before training")
        _add_manifest_flag(p)
        return p

    p = training_parser("train-pca", "train a PCA model on descriptors")
    p.add_argument("--out-dim", type=int, required=True)
    p.set_defaults(func=cmd_train_pca, pca=None, pca_reduce=True)

    p = training_parser("train-kmeans", "train a k-means codebook")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--iters", type=int, default=25)
    p.add_argument("--pca", default=None, metavar="MODEL")
    p.add_argument("--pca-reduce", action=argparse.BooleanOptionalAction, default=False,
                   help="reduce during preprocessing (default: rotation only)")
    p.set_defaults(func=cmd_train_kmeans)

    p = training_parser("train-gmm", "train a diagonal GMM")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--pca", default=None, metavar="MODEL")
    p.add_argument("--pca-reduce", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train_gmm)

    p = sub.add_parser("train-rn", help="learn the rotation + renormalization model")
    p.add_argument("--vectors", required=True, help="encoded vectors from a held-out corpus")
    p.add_argument("--exponent", type=float, default=0.5)
    p.add_argument("--whiten", action="store_true")
    p.add_argument("--out", required=True)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_train_rn)

    p = sub.add_parser("encode", help="encode descriptor files into a vector file")
    p.add_argument("descriptors", nargs="+", metavar="PATH")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_pipeline_flags(p)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("query", help="rank a database against one query")
    p.add_argument("--db", required=True)
    p.add_argument("--query-desc", required=True)
    p.add_argument("--rotations", type=int, default=1)
    p.add_argument("--top", type=int, default=10)
    _add_pipeline_flags(p)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="mean average precision over a query set")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", nargs="+", required=True, metavar="PATH")
    p.add_argument("--gt", required=True)
    p.add_argument("--rotations", type=int, default=1)
    p.add_argument("--exclude-query", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    _add_pipeline_flags(p)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("angle-kernel-dump", help="CSV of the angle kernel and its series")
    p.add_argument("--kappa", type=float, default=8.0)
    p.add_argument("--nfreq", type=int, default=3)
    p.add_argument("--angle-family", choices=("von-mises", "cosine-power"),
                   default="von-mises")
    p.add_argument("--cosine-power", type=int, default=None, metavar="P")
    p.add_argument("--grid", type=int, default=1024)
    p.add_argument("--out", default=None)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_angle_kernel_dump)

    p = sub.add_parser("sim-hist", help="per-angle-bin similarity histograms as CSV")
    p.add_argument("--a", required=True, help="descriptor file: first element of each pair")
    p.add_argument("--b", required=True, help="descriptor file: second element of each pair")
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--value-bins", type=int, default=24)
    p.add_argument("--kappa", type=float, default=8.0)
    p.add_argument("--nfreq", type=int, default=3)
    p.add_argument("--angle-family", choices=("von-mises", "cosine-power"),
                   default="von-mises")
    p.add_argument("--cosine-power", type=int, default=None, metavar="P")
    p.add_argument("--out", default=None)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_sim_hist)

    defaults = SynthConfig()
    p = sub.add_parser("synth", help="generate a synthetic planted-match corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--queries", type=int, default=defaults.n_queries)
    p.add_argument("--matches", type=int, default=defaults.matches_per_query)
    p.add_argument("--distractors", type=int, default=defaults.n_distractors)
    p.add_argument("--descriptors", type=int, default=defaults.descriptors_per_image)
    p.add_argument("--dim", type=int, default=defaults.dim)
    p.add_argument("--shared-fraction", type=float, default=defaults.shared_fraction)
    p.add_argument("--noise-sigma", type=float, default=defaults.noise_sigma)
    p.add_argument("--angle-jitter", type=float, default=defaults.angle_jitter)
    p.add_argument("--seed", type=int, default=defaults.seed)
    _add_manifest_flag(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run-manifest", help="replay a recorded configuration")
    p.add_argument("manifest_file")
    p.set_defaults(func=cmd_run_manifest)

    return parser


_HANDLERS = {
    "train-pca": cmd_train_pca,
    "train-kmeans": cmd_train_kmeans,
    "train-gmm": cmd_train_gmm,
    "train-rn": cmd_train_rn,
    "encode": cmd_encode,
    "query": cmd_query,
    "evaluate": cmd_evaluate,
    "angle-kernel-dump": cmd_angle_kernel_dump,
    "sim-hist": cmd_sim_hist,
    "synth": cmd_synth,
    "run-manifest": cmd_run_manifest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CovaggError as exc:
        print(f"covagg: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"covagg: error: {exc}", file=sys.stderr)
        return ContractError.exit_code


if __name__ == "__main__":
    sys.exit(main())
