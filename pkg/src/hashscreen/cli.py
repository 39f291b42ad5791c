"""Command-line operator surface.

Subcommands: train, encode, build, search, eval, bench, sweep. Every
failure exits through one mapping from exception type to (category, exit
code) and prints a single machine-parseable line to stderr::

    error:<category>: <message>

Exit codes: 0 success, 2 input error, 3 data/shape error, 4 training
divergence, 5 I/O. Scan parallelism is capped by HASHSCREEN_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import codedb, kernels
from .codes import BinaryCode, pack_sign_matrix, unpack_bits, unpack_word_matrix
from .config import check_known_keys, get_float, get_int, get_str, load_config
from .dataio import PairDataset, SynthSpec, generate_synthetic, load_pairs, read_features, split
from .encoder import Model, encode_batch, load_checkpoint, save_checkpoint
from .errors import (
    CorruptCheckpointError,
    CorruptDatabaseError,
    DegenerateInputError,
    HashscreenError,
    InvalidInputError,
    ParseError,
    ResourceLimitError,
    ShapeError,
    TrainingDivergedError,
    UndefinedMetricError,
)
from .metrics import (
    DEFAULT_ALPHA,
    MetricReport,
    evaluate_ranking,
    make_ranking,
    summarize_reports,
    write_report_csv,
    write_summary_json,
)
from .training import TrainingConfig, train, write_curve_csv

_ENCODE_CHUNK = 1024

_TRAIN_KEYS = {
    "lambda", "tau", "batch_size", "code_length", "epochs", "lr", "seed",
    "hidden_dim", "grad_accumulation", "bedroc_alpha",
    "train_frac", "val_frac", "test_frac",
    "protein_tsv", "molecule_tsv",
    "synth_clusters", "synth_pairs_per_cluster", "synth_protein_dim",
    "synth_molecule_dim", "synth_center_scale", "synth_noise_sigma", "synth_seed",
}


def _error_category(exc: BaseException) -> tuple[str, int]:
    if isinstance(exc, TrainingDivergedError):
        return "divergence", 4
    if isinstance(exc, (CorruptDatabaseError, CorruptCheckpointError, ParseError)):
        return "data", 3
    if isinstance(exc, (DegenerateInputError, UndefinedMetricError)):
        return "data", 3
    if isinstance(exc, ShapeError):
        return "shape", 3
    if isinstance(exc, ResourceLimitError):
        return "io", 5
    if isinstance(exc, InvalidInputError):
        return "input", 2
    if isinstance(exc, FileNotFoundError):
        return "input", 2
    if isinstance(exc, OSError):
        return "io", 5
    raise exc


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise InvalidInputError(f"{what} not found: {path}")
    return path


def _pick_float(flag, cfg, key, default):
    return flag if flag is not None else get_float(cfg, key, default)


def _pick_int(flag, cfg, key, default):
    return flag if flag is not None else get_int(cfg, key, default)


def _training_config(args, cfg) -> TrainingConfig:
    return TrainingConfig(
        lambda_=_pick_float(getattr(args, "lambda_", None), cfg, "lambda", 0.2),
        tau=_pick_float(getattr(args, "tau", None), cfg, "tau", 0.07),
        batch_size=_pick_int(getattr(args, "batch_size", None), cfg, "batch_size", 48),
        code_length=_pick_int(getattr(args, "code_bits", None), cfg, "code_length", 128),
        epochs=_pick_int(getattr(args, "epochs", None), cfg, "epochs", 10),
        learning_rate=_pick_float(getattr(args, "lr", None), cfg, "lr", 1e-3),
        seed=_pick_int(getattr(args, "seed", None), cfg, "seed", 0),
        grad_accumulation=_pick_int(None, cfg, "grad_accumulation", 1),
        hidden_dim=_pick_int(getattr(args, "hidden_dim", None), cfg, "hidden_dim", 64),
        bedroc_alpha=_pick_float(None, cfg, "bedroc_alpha", DEFAULT_ALPHA),
    )


def _load_train_data(args, cfg, tc: TrainingConfig) -> PairDataset:
    protein_tsv = getattr(args, "protein_tsv", None) or get_str(cfg, "protein_tsv")
    molecule_tsv = getattr(args, "molecule_tsv", None) or get_str(cfg, "molecule_tsv")
    has_synth = any(k.startswith("synth_") for k in cfg)
    if protein_tsv and molecule_tsv:
        if has_synth:
            raise InvalidInputError(
                "config mixes TSV paths with synth_* keys; pick one data source"
            )
        _require_file(protein_tsv, "protein feature file")
        _require_file(molecule_tsv, "molecule feature file")
        return load_pairs(protein_tsv, molecule_tsv)
    if protein_tsv or molecule_tsv:
        raise InvalidInputError("need both protein_tsv and molecule_tsv, got one")
    if not has_synth:
        raise InvalidInputError(
            "no training data: give protein_tsv/molecule_tsv or synth_* config keys"
        )
    spec = SynthSpec(
        num_clusters=get_int(cfg, "synth_clusters", 8),
        pairs_per_cluster=get_int(cfg, "synth_pairs_per_cluster", 32),
        protein_dim=get_int(cfg, "synth_protein_dim", 32),
        molecule_dim=get_int(cfg, "synth_molecule_dim", 24),
        center_scale=get_float(cfg, "synth_center_scale", 4.0),
        noise_sigma=get_float(cfg, "synth_noise_sigma", 0.5),
        seed=get_int(cfg, "synth_seed", tc.seed),
    )
    return generate_synthetic(spec)


def _split_dataset(dataset: PairDataset, cfg, tc: TrainingConfig):
    fractions = (
        get_float(cfg, "train_frac", 0.7),
        get_float(cfg, "val_frac", 0.15),
        get_float(cfg, "test_frac", 0.15),
    )
    train_ds, val_ds, test_ds = split(dataset, fractions, tc.seed)
    return train_ds, (val_ds if len(val_ds) else None), test_ds


def _run_training(args, cfg):
    tc = _training_config(args, cfg)
    dataset = _load_train_data(args, cfg, tc)
    train_ds, val_ds, test_ds = _split_dataset(dataset, cfg, tc)
    result = train(train_ds, tc, val_ds)
    return tc, result, val_ds, test_ds


def cmd_train(args) -> int:
    cfg = {}
    if args.config:
        cfg = load_config(_require_file(args.config, "config file"))
        check_known_keys(cfg, _TRAIN_KEYS, args.config)
    _, result, _, _ = _run_training(args, cfg)
    save_checkpoint(result.model, args.out)
    log_path = args.log or args.out + ".log.csv"
    write_curve_csv(log_path, result.curve)
    last = result.curve[-1]
    best = result.curve[result.best_epoch - 1]
    line = (
        f"trained {len(result.curve)} epoch(s); final total loss {last.total:.6f}; "
        f"best epoch {result.best_epoch}"
    )
    if best.val_bedroc is not None:
        line += f" (val bedroc {best.val_bedroc:.4f})"
    print(line)
    print(f"checkpoint: {args.out}")
    print(f"epoch log:  {log_path}")
    return 0


def _stream_sign_blocks(params, features: np.ndarray):
    for start in range(0, features.shape[0], _ENCODE_CHUNK):
        chunk = features[start : start + _ENCODE_CHUNK]
        yield pack_sign_matrix(encode_batch(params, chunk))


def _write_ids_sidecar(db_path: str, ids) -> None:
    with open(db_path + ".ids", "w", encoding="utf-8") as fh:
        for item_id in ids:
            fh.write(f"{item_id}\n")


def cmd_encode(args) -> int:
    model = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    enc_config, params = model.side(args.modality)
    ids, features = read_features(_require_file(args.input, "feature file"))
    if features.shape[0] and features.shape[1] != enc_config.input_dim:
        raise ShapeError(
            f"{args.input} rows have {features.shape[1]} features, "
            f"{args.modality} encoder wants {enc_config.input_dim}"
        )
    db = codedb.build_database(
        _stream_sign_blocks(params, features), args.out, model.code_length
    )
    _write_ids_sidecar(args.out, ids)
    print(f"encoded {db.count} {args.modality} record(s) at {db.code_bits} bits -> {args.out}")
    return 0


def cmd_build(args) -> int:
    ids, rows = read_features(_require_file(args.input, "feature file"))
    if rows.shape[0]:
        width = rows.shape[1]
        if args.code_bits is not None and args.code_bits != width:
            raise ShapeError(
                f"--code-bits {args.code_bits} but rows carry {width} values"
            )
        code_bits = width
        blocks = (
            pack_sign_matrix(rows[s : s + _ENCODE_CHUNK])
            for s in range(0, rows.shape[0], _ENCODE_CHUNK)
        )
    else:
        if args.code_bits is None:
            raise InvalidInputError("empty input needs --code-bits for the header")
        code_bits = args.code_bits
        blocks = iter(())
    db = codedb.build_database(blocks, args.out, code_bits)
    _write_ids_sidecar(args.out, ids)
    print(f"built {db.count} record(s) at {db.code_bits} bits -> {args.out}")
    return 0


def _queries_from_args(args, db_bits: int) -> list[tuple[str, BinaryCode]]:
    if getattr(args, "query_code", None):
        try:
            raw = bytes.fromhex(args.query_code)
        except ValueError as exc:
            raise InvalidInputError(f"--query-code is not valid hex: {exc}") from exc
        return [("query", BinaryCode.from_bytes(raw, db_bits))]
    if not args.checkpoint:
        raise InvalidInputError("--query-tsv needs --checkpoint to encode the queries")
    model = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    enc_config, params = model.side(args.modality)
    if model.code_length != db_bits:
        raise ShapeError(
            f"checkpoint emits {model.code_length}-bit codes, database stores {db_bits}"
        )
    ids, features = read_features(_require_file(args.query_tsv, "query feature file"))
    if features.shape[0] == 0:
        raise InvalidInputError(f"{args.query_tsv}: no query rows")
    if features.shape[1] != enc_config.input_dim:
        raise ShapeError(
            f"{args.query_tsv} rows have {features.shape[1]} features, "
            f"{args.modality} encoder wants {enc_config.input_dim}"
        )
    words = pack_sign_matrix(encode_batch(params, features))
    return [(qid, BinaryCode(w, db_bits)) for qid, w in zip(ids, words)]


def cmd_search(args) -> int:
    db = codedb.open_database(_require_file(args.db, "database"))
    if not args.query_code and not args.query_tsv:
        raise InvalidInputError("give --query-code or --query-tsv with --checkpoint")
    for query_id, code in _queries_from_args(args, db.code_bits):
        result = codedb.topk_hamming(db, code, args.k)
        for record, distance in result:
            print(f"{query_id}\t{db.label_of(record)}\t{distance}")
    return 0


def _read_label_pairs(path: str) -> dict[str, set[str]]:
    actives: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(
                    f"{path}:{lineno}: expected query_id<TAB>record_id, "
                    f"got {len(fields)} field(s)"
                )
            actives.setdefault(fields[0], set()).add(fields[1])
    return actives


def _listed(items, limit: int = 10) -> str:
    items = sorted(items)
    shown = ", ".join(items[:limit])
    if len(items) > limit:
        shown += f", ... ({len(items)} total)"
    return shown


def cmd_eval(args) -> int:
    db = codedb.open_database(_require_file(args.db, "database"))
    if db.count == 0:
        raise InvalidInputError(f"{args.db}: empty database")
    record_ids = db.ids() or [str(i) for i in range(db.count)]
    id_to_row = {rid: i for i, rid in enumerate(record_ids)}
    actives = _read_label_pairs(_require_file(args.labels, "label file"))
    missing_records = {r for group in actives.values() for r in group} - set(id_to_row)
    if missing_records:
        raise InvalidInputError(
            f"label file names record id(s) absent from the database: "
            f"{_listed(missing_records)}"
        )
    queries = _queries_from_args(args, db.code_bits)
    unlabeled = [qid for qid, _ in queries if qid not in actives]
    if unlabeled:
        raise InvalidInputError(
            f"no labels for query id(s): {_listed(unlabeled)}"
        )

    words = np.asarray(db.words, dtype=np.uint64)
    if args.mode == "cosine":
        # sign codes as explicit +-1 vectors; rank order provably matches
        # hamming mode, which is exactly what this mode exists to check
        db_rows = unpack_word_matrix(words, db.code_bits)
    rows = []
    for query_id, code in queries:
        label_row = np.zeros(db.count, dtype=bool)
        for rid in actives[query_id]:
            label_row[id_to_row[rid]] = True
        if args.mode == "hamming":
            scores = -kernels.hamming_distances(words, np.asarray(code.words), db.code_bits)
        else:
            q = unpack_bits(code)
            qn = np.linalg.norm(q)
            norms = np.linalg.norm(db_rows, axis=1)
            scores = (db_rows @ q) / (norms * qn)
        ranking = make_ranking(scores, label_row, np.asarray(record_ids))
        rows.append((query_id, evaluate_ranking(ranking, alpha=args.alpha)))

    summary = summarize_reports([r for _, r in rows])
    if args.out_csv:
        write_report_csv(args.out_csv, rows)
    if args.out_json:
        write_summary_json(args.out_json, summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    report = codedb.bench(
        count=args.count,
        code_bits=args.code_bits,
        repetitions=args.repetitions,
        workdir=args.workdir,
        k=args.k,
        seed=args.seed,
    )
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    print(payload)
    return 0


def _dataset_reports(model: Model, dataset: PairDataset, alpha: float) -> list[MetricReport]:
    """Hashed-retrieval metrics over a labeled pair dataset, one per query."""
    yp = encode_batch(model.protein, dataset.protein_features)
    ym = encode_batch(model.molecule, dataset.molecule_features)
    sp = np.where(yp > 0, 1.0, -1.0)
    sm = np.where(ym > 0, 1.0, -1.0)
    scores = sp @ sm.T
    n = len(dataset)
    if dataset.clusters is not None:
        label_matrix = dataset.clusters[None, :] == dataset.clusters[:, None]
    else:
        label_matrix = np.eye(n, dtype=bool)
    reports = []
    for k in range(n):
        active = label_matrix[k]
        if 0 < int(active.sum()) < n:
            reports.append(
                evaluate_ranking(make_ranking(scores[k], active), alpha=alpha)
            )
    if not reports:
        raise UndefinedMetricError("no query in the split has both classes")
    return reports


def cmd_sweep(args) -> int:
    cfg = {}
    if args.config:
        cfg = load_config(_require_file(args.config, "config file"))
        check_known_keys(cfg, _TRAIN_KEYS, args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise InvalidInputError("--values is empty")
    if args.param == "lambda" and args.lambda_ is not None:
        raise InvalidInputError("--lambda conflicts with --param lambda; use --values")
    if args.param == "code-bits" and args.code_bits is not None:
        raise InvalidInputError("--code-bits conflicts with --param code-bits; use --values")

    columns = ["setting", "status", "bedroc", "ef0.5", "ef1", "ef5"]
    out_rows: list[list[str]] = []
    for value in values:
        override = dict(cfg)
        if args.param == "lambda":
            override["lambda"] = value
        else:
            override["code_length"] = value
        try:
            tc, result, _, test_ds = _run_training(args, override)
            reports = _dataset_reports(result.model, test_ds, tc.bedroc_alpha)
            summary = summarize_reports(reports)
            out_rows.append(
                [
                    value,
                    "ok",
                    repr(summary["bedroc_mean"]),
                    repr(summary["ef0.5_mean"]),
                    repr(summary["ef1_mean"]),
                    repr(summary["ef5_mean"]),
                ]
            )
            if args.workdir:
                os.makedirs(args.workdir, exist_ok=True)
                tag = value.replace(".", "p")
                save_checkpoint(
                    result.model, os.path.join(args.workdir, f"{args.param}-{tag}.ckpt")
                )
        except HashscreenError as exc:
            category, _ = _error_category(exc)
            out_rows.append([value, f"error:{category}", "", "", "", ""])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(out_rows)
    for row in out_rows:
        print("\t".join(row))
    return 0


def _add_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--protein-tsv", dest="protein_tsv", help="protein feature TSV")
    p.add_argument("--molecule-tsv", dest="molecule_tsv", help="molecule feature TSV")
    p.add_argument("--seed", type=int, help="master RNG seed (default 0)")
    p.add_argument("--lambda", dest="lambda_", type=float,
                   help="quantization loss weight (default 0.2)")
    p.add_argument("--tau", type=float, help="softmax temperature (default 0.07)")
    p.add_argument("--code-bits", dest="code_bits", type=int,
                   help="hash code length d (default 128)")
    p.add_argument("--batch-size", dest="batch_size", type=int,
                   help="pairs per batch (default 48)")
    p.add_argument("--epochs", type=int, help="training epochs (default 10)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int,
                   help="encoder hidden width (default 64)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hashscreen",
        description="Cross-modal hashing for molecule retrieval: train encoders, "
        "pack sign codes into databases, scan, and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the two encoders")
    _add_training_flags(p)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="per-epoch CSV path (default <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode a feature TSV into a code database")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--modality", choices=("protein", "molecule"), required=True)
    p.add_argument("--in", dest="input", required=True, help="feature TSV")
    p.add_argument("--out", required=True, help="database output path")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("build", help="pack precomputed vectors (sign-quantized) into a database")
    p.add_argument("--in", dest="input", required=True, help="TSV of id + d values")
    p.add_argument("--code-bits", dest="code_bits", type=int,
                   help="required when the input has no rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("search", help="top-k Hamming scan of a database")
    p.add_argument("--db", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--query-code", dest="query_code",
                   help="packed code as hex (little-endian byte order)")
    p.add_argument("--query-tsv", dest="query_tsv", help="feature TSV to encode as queries")
    p.add_argument("--checkpoint", help="needed with --query-tsv")
    p.add_argument("--modality", choices=("protein", "molecule"), default="protein")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="screening metrics over a query set")
    p.add_argument("--db", required=True)
    p.add_argument("--labels", required=True,
                   help="TSV of query_id<TAB>active record id, one pair per line")
    p.add_argument("--query-tsv", dest="query_tsv", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--modality", choices=("protein", "molecule"), default="protein")
    p.add_argument("--mode", choices=("hamming", "cosine"), default="hamming")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--out-csv", dest="out_csv", help="per-query metrics CSV")
    p.add_argument("--out-json", dest="out_json", help="summary JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="memory/time cost of packed vs real-valued scans")
    p.add_argument("--count", type=int, required=True, help="database records C")
    p.add_argument("--code-bits", dest="code_bits", type=int, default=128)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workdir", help="scratch directory (default: a temp dir)")
    p.add_argument("--out", help="write the JSON report here too")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="train+eval across lambda or code-length values")
    _add_training_flags(p)
    p.add_argument("--param", choices=("lambda", "code-bits"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="comparison CSV")
    p.add_argument("--workdir", help="keep per-setting checkpoints here")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HashscreenError, OSError) as exc:
        category, code = _error_category(exc)
        print(f"error:{category}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
