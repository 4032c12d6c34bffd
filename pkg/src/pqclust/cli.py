"""Batch command line front end.

Subcommands: synth, train-codebook, encode, cluster, eval, bench.
Every command takes a single --seed; stage seeds (data generation,
codebook init, binarizer, clustering init) are derived from it through
fixed SeedSequence keys, so one seed pins the whole pipeline. Exit
status is 0 only when all outputs were written and validated; every
diagnostic names the failing input.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, clustering, io, pq

_STAGE_IDS = {"synth": 0, "codebook": 1, "encode": 2, "binarize": 3, "cluster": 4}
_ENCODE_CHUNK = 65536
_BENCH_COLUMNS = [
    "method",
    "n",
    "k",
    "m",
    "l",
    "bits",
    "threads",
    "seed",
    "iterations_run",
    "converged",
    "objective",
    "original_space_error",
    "assign_seconds",
    "update_seconds",
    "naive_update_seconds",
    "mean_histogram_nnz",
    "memory_bytes",
]


def derive_seed(seed: int, stage: str) -> int:
    """Stable per-stage sub-seed from the single CLI seed."""
    return int(np.random.SeedSequence([seed, _STAGE_IDS[stage]]).generate_state(1)[0])


def _add_seed_and_threads(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    parser.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count() or 1,
        help="worker threads; results do not depend on this (default: all cores)",
    )


def _check_common(args: argparse.Namespace) -> None:
    if args.seed < 0:
        raise ValueError(f"--seed must be non-negative, got {args.seed}")
    if getattr(args, "threads", 1) < 1:
        raise ValueError(f"--threads must be positive, got {args.threads}")


def cmd_synth(args: argparse.Namespace) -> int:
    _check_common(args)
    vectors, labels = io.generate_synthetic(
        args.n, args.dim, args.clusters, args.spread, derive_seed(args.seed, "synth")
    )
    io.write_fvecs(args.out, vectors)
    print(f"wrote {args.n} vectors of dimension {args.dim} to {args.out}")
    if args.labels_out:
        io.write_labels(args.labels_out, labels)
        print(f"wrote ground-truth labels to {args.labels_out}")
    return 0


def cmd_train_codebook(args: argparse.Namespace) -> int:
    _check_common(args)
    train = io.read_fvecs(args.train)
    if train.size == 0:
        raise ValueError(f"{args.train}: training file holds no vectors")
    codebook = pq.train_codebook(
        train,
        args.m,
        args.l,
        iterations=args.iterations,
        seed=derive_seed(args.seed, "codebook"),
    )
    io.write_codebook(args.out, codebook)
    reconstructed = pq.decode(codebook, pq.encode(codebook, train))
    mse = float(
        np.mean(np.sum((train.astype(np.float64) - reconstructed) ** 2, axis=1))
    )
    print(
        f"trained codebook D={codebook.dim} M={args.m} L={args.l} "
        f"on {len(train)} vectors, train_mse={mse:.6g}"
    )
    print(f"wrote codebook to {args.out}")
    return 0


def cmd_encode(args: argparse.Namespace) -> int:
    _check_common(args)
    codebook = io.read_codebook(args.codebook)
    size = os.path.getsize(args.data)
    record_bytes = 4 + 4 * codebook.dim
    if size % record_bytes:
        raise ValueError(
            f"{args.data}: size {size} does not divide into records of "
            f"dimension {codebook.dim}"
        )
    n = size // record_bytes
    if n == 0:
        raise ValueError(f"{args.data}: no vectors to encode")
    with io.CodesWriter(
        args.out, n, codebook.num_subspaces, codebook.num_codewords
    ) as writer:
        for chunk in io.iter_fvecs(args.data, _ENCODE_CHUNK):
            if chunk.shape[1] != codebook.dim:
                raise ValueError(
                    f"{args.data}: vectors have dimension {chunk.shape[1]}, "
                    f"codebook expects {codebook.dim}"
                )
            writer.write(pq.encode(codebook, chunk))
    print(f"encoded {n} vectors into {args.out}")
    return 0


def _load_binary_input(args: argparse.Namespace) -> np.ndarray:
    if args.binary_codes:
        packed, _ = io.read_binary_codes(args.binary_codes)
        return packed
    if not args.data or not args.bits:
        raise ValueError(
            "method bkmeans needs --binary-codes, or --data with --bits"
        )
    vectors = io.read_fvecs(args.data)
    binarizer = baselines.train_binarizer(
        vectors.shape[1], args.bits, derive_seed(args.seed, "binarize")
    )
    packed = baselines.binarize(binarizer, vectors)
    if args.binary_codes_out:
        io.write_binary_codes(args.binary_codes_out, packed)
        print(f"wrote binary codes to {args.binary_codes_out}")
    return packed


def _run_method(args: argparse.Namespace, method: str, k: int):
    """Run one clustering method. Returns (result, row dict for bench)."""
    seed = derive_seed(args.seed, "cluster")
    row: dict[str, object] = {"method": method, "k": k, "threads": args.threads, "seed": args.seed}
    if method == "pqkmeans":
        if not args.codes or not args.codebook:
            raise ValueError("method pqkmeans needs --codes and --codebook")
        codes, m, l_count = io.read_codes(args.codes)
        codebook = io.read_codebook(args.codebook)
        if codebook.num_subspaces != m or codebook.num_codewords != l_count:
            raise ValueError(
                f"{args.codebook} (M={codebook.num_subspaces}, "
                f"L={codebook.num_codewords}) does not match {args.codes} "
                f"(M={m}, L={l_count})"
            )
        tables = pq.build_distance_tables(codebook)
        result = clustering.fit(
            codes,
            tables,
            k,
            max_iterations=args.max_iterations,
            seed=seed,
            threads=args.threads,
            update=args.update,
        )
        nnz = [
            s.mean_histogram_nnz for s in result.trace if s.mean_histogram_nnz is not None
        ]
        row.update(
            n=len(codes),
            m=m,
            l=l_count,
            mean_histogram_nnz=float(np.mean(nnz)) if nnz else "",
            memory_bytes=clustering.estimate_memory(len(codes), k, m, l_count).total_bytes,
        )
        if args.time_naive_update and args.update == "sparse":
            naive = clustering.fit(
                codes,
                tables,
                k,
                max_iterations=args.max_iterations,
                seed=seed,
                threads=args.threads,
                update="naive",
            )
            if not np.array_equal(naive.labels, result.labels):
                raise ValueError(
                    "naive and sparse updates disagreed; benchmark aborted"
                )
            row["naive_update_seconds"] = sum(s.update_seconds for s in naive.trace)
        return result, row
    if method == "kmeans":
        if not args.data:
            raise ValueError("method kmeans needs --data")
        vectors = io.read_fvecs(args.data)
        result = baselines.kmeans_fit(
            vectors,
            k,
            max_iterations=args.max_iterations,
            seed=seed,
            threads=args.threads,
        )
        dim = vectors.shape[1]
        row.update(n=len(vectors), memory_bytes=4.0 * dim * (len(vectors) + k) + 4.0 * len(vectors))
        return result, row
    if method == "bkmeans":
        packed = _load_binary_input(args)
        result = baselines.bkmeans_fit(
            packed,
            k,
            max_iterations=args.max_iterations,
            seed=seed,
            threads=args.threads,
        )
        bits = 8 * packed.shape[1]
        row.update(
            n=len(packed),
            bits=bits,
            memory_bytes=(bits / 8.0) * (len(packed) + k) + 4.0 * len(packed),
        )
        return result, row
    raise ValueError(f"unknown method {method!r}")


def _write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "objective", "assign_ms", "update_ms"])
        for stats in trace:
            writer.writerow(
                [
                    stats.iteration,
                    repr(stats.objective),
                    f"{1000.0 * stats.assign_seconds:.3f}",
                    f"{1000.0 * stats.update_seconds:.3f}",
                ]
            )


def cmd_cluster(args: argparse.Namespace) -> int:
    _check_common(args)
    if args.k < 1:
        raise ValueError(f"--k must be positive, got {args.k}")
    if args.max_iterations < 1:
        raise ValueError(f"--max-iterations must be positive, got {args.max_iterations}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result, row = _run_method(args, args.method, args.k)

    labels_path = out_dir / "labels.bin"
    io.write_labels(labels_path, result.labels)
    if args.method == "pqkmeans":
        centers_path = out_dir / "centers.pqkc"
        io.write_codes(centers_path, result.centers, int(row["l"]))
    elif args.method == "kmeans":
        centers_path = out_dir / "centers.fvecs"
        io.write_fvecs(centers_path, result.centers.astype(np.float32))
    else:
        centers_path = out_dir / "centers.pqkb"
        io.write_binary_codes(centers_path, result.centers)
    trace_path = out_dir / "trace.csv"
    _write_trace_csv(trace_path, result.trace)

    document = {
        "command": "cluster",
        "config": {
            "method": args.method,
            "k": args.k,
            "max_iterations": args.max_iterations,
            "seed": args.seed,
            "threads": args.threads,
            "update": getattr(args, "update", None),
            "codes": args.codes,
            "codebook": args.codebook,
            "data": args.data,
            "binary_codes": args.binary_codes,
            "bits": args.bits,
        },
        "n": int(row["n"]),
        "iterations_run": result.iterations_run,
        "converged": result.converged,
        "objective": result.trace[-1].objective,
        "trace": [
            {
                "iteration": s.iteration,
                "objective": s.objective,
                "objective_sq": s.objective_sq,
                "assign_seconds": s.assign_seconds,
                "update_seconds": s.update_seconds,
                "repaired_clusters": s.repaired_clusters,
                "mean_histogram_nnz": s.mean_histogram_nnz,
            }
            for s in result.trace
        ],
        "outputs": {
            "labels": str(labels_path),
            "centers": str(centers_path),
            "trace_csv": str(trace_path),
        },
    }
    io.save_result_document(out_dir / "result.json", document)

    if len(io.read_labels(labels_path)) != int(row["n"]):
        raise ValueError(f"{labels_path}: written labels failed validation")
    print(
        f"{args.method}: n={row['n']} k={args.k} "
        f"iterations={result.iterations_run} converged={result.converged} "
        f"objective={result.trace[-1].objective:.6g}"
    )
    print(f"wrote labels, centers, trace and result.json under {out_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    _check_common(args)
    vectors = io.read_fvecs(args.data)
    labels = io.read_labels(args.labels)
    if len(labels) != len(vectors):
        raise ValueError(
            f"{args.labels} holds {len(labels)} labels but {args.data} "
            f"holds {len(vectors)} vectors"
        )
    report: dict[str, object] = {
        "n": len(vectors),
        "original_space_error": baselines.original_space_error(vectors, labels),
    }
    if args.reference:
        reference = io.read_labels(args.reference)
        if len(reference) != len(labels):
            raise ValueError(
                f"{args.reference} holds {len(reference)} labels, expected {len(labels)}"
            )
        report["rand_index"] = baselines.rand_index(labels, reference)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    _check_common(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    k_grid = [int(v) for v in args.k_grid.split(",") if v.strip()]
    if not methods or not k_grid:
        raise ValueError("--methods and --k-grid must be non-empty")
    if any(k < 1 for k in k_grid):
        raise ValueError(f"--k-grid entries must be positive, got {k_grid}")
    eval_vectors = io.read_fvecs(args.data) if args.data else None
    rows = []
    for method in methods:
        for k in k_grid:
            result, row = _run_method(args, method, k)
            row.setdefault("naive_update_seconds", "")
            row.setdefault("mean_histogram_nnz", "")
            row.setdefault("m", "")
            row.setdefault("l", "")
            row.setdefault("bits", "")
            row.update(
                iterations_run=result.iterations_run,
                converged=result.converged,
                objective=result.trace[-1].objective,
                assign_seconds=sum(s.assign_seconds for s in result.trace),
                update_seconds=sum(s.update_seconds for s in result.trace),
                original_space_error=(
                    baselines.original_space_error(eval_vectors, result.labels)
                    if eval_vectors is not None
                    else ""
                ),
            )
            rows.append(row)
    out_fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(out_fh, fieldnames=_BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if args.out:
            out_fh.close()
    if args.out:
        print(f"wrote {len(rows)} benchmark rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pqclust",
        description="Cluster large vector collections through product-quantized codes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled Gaussian-mixture dataset")
    p.add_argument("--out", required=True, help="output fvecs path")
    p.add_argument("--labels-out", default=None, help="optional ground-truth label path")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--dim", type=int, required=True, help="dimensionality")
    p.add_argument("--clusters", type=int, required=True, help="mixture components")
    p.add_argument("--spread", type=float, default=0.05, help="component stddev")
    _add_seed_and_threads(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-codebook", help="train per-subspace codewords")
    p.add_argument("--train", required=True, help="training fvecs path")
    p.add_argument("--out", required=True, help="output codebook path")
    p.add_argument("--m", type=int, required=True, help="number of subspaces")
    p.add_argument("--l", type=int, required=True, help="codewords per subspace")
    p.add_argument("--iterations", type=int, default=20, help="k-means iterations")
    _add_seed_and_threads(p)
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("encode", help="quantize vectors into a PQ code file")
    p.add_argument("--codebook", required=True, help="codebook path")
    p.add_argument("--data", required=True, help="input fvecs path")
    p.add_argument("--out", required=True, help="output code file path")
    _add_seed_and_threads(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("cluster", help="run a clustering method")
    p.add_argument("--method", required=True, choices=["pqkmeans", "kmeans", "bkmeans"])
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--max-iterations", type=int, default=20)
    p.add_argument("--codes", default=None, help="PQ code file (pqkmeans)")
    p.add_argument("--codebook", default=None, help="codebook file (pqkmeans)")
    p.add_argument("--data", default=None, help="fvecs file (kmeans, or bkmeans with --bits)")
    p.add_argument("--binary-codes", default=None, help="binary code file (bkmeans)")
    p.add_argument("--bits", type=int, default=None, help="binarize --data to this many bits")
    p.add_argument("--binary-codes-out", default=None, help="persist binarized codes here")
    p.add_argument("--update", choices=["sparse", "naive"], default="sparse")
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_seed_and_threads(p)
    p.set_defaults(func=cmd_cluster, time_naive_update=False)

    p = sub.add_parser("eval", help="score labels on the original vectors")
    p.add_argument("--data", required=True, help="fvecs path")
    p.add_argument("--labels", required=True, help="label file to score")
    p.add_argument("--reference", default=None, help="reference labels for the Rand index")
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.set_defaults(func=cmd_eval, seed=0)

    p = sub.add_parser("bench", help="sweep methods and cluster counts, emit CSV")
    p.add_argument("--methods", default="pqkmeans", help="comma-separated method list")
    p.add_argument("--k-grid", required=True, help="comma-separated cluster counts")
    p.add_argument("--codes", default=None)
    p.add_argument("--codebook", default=None)
    p.add_argument("--data", default=None, help="fvecs; also enables the error column")
    p.add_argument("--binary-codes", default=None)
    p.add_argument("--bits", type=int, default=None)
    p.add_argument("--binary-codes-out", default=None)
    p.add_argument("--update", choices=["sparse", "naive"], default="sparse")
    p.add_argument("--max-iterations", type=int, default=20)
    p.add_argument(
        "--time-naive-update",
        action="store_true",
        help="also run the naive update and record its time",
    )
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    _add_seed_and_threads(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
