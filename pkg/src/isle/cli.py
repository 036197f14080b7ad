"""``isle`` command-line entry point.

Exit codes: 0 success, 1 I/O or network failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import codestream as cs_mod
from .codestream import (
    DEFAULT_ALPHA,
    HEADER_SIZE,
    INDEX_ENTRY_SIZE,
    CodestreamError,
    PlanError,
    decode_partial,
    encode,
    parse,
    plan_decompositions,
    serialize,
    truncate,
)
from .image_io import FormatError, read_labels_csv, read_pgm, write_labels_csv, write_pgm
from .optimizer import OptimizerError, select_optimal
from .report import (
    BENCH_COLUMNS,
    bench_rows,
    format_delimited,
    plot_auroc_report,
    plot_transfer_metrics,
)
from .scorer import MissingScoreError, ScorerSpec
from .service import (
    FULL_STREAM,
    BenchmarkError,
    StoreError,
    StreamError,
    StreamServer,
    fetch,
    load_store,
    run_benchmark,
)
from .synthetic import make_synthetic_corpus

log = logging.getLogger("isle")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    """Flag validation failure (exit 2)."""


def _default_alpha() -> int:
    raw = os.environ.get("ISLE_ALPHA")
    if raw is None:
        return DEFAULT_ALPHA
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"ISLE_ALPHA must be an integer, got {raw!r}") from None
    return value


def write_atomic(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _parse_d(text: str) -> int:
    if text in ("full", "-1"):
        return FULL_STREAM
    try:
        d = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"decomposition must be an integer or 'full', got {text!r}")
    if d < 0 or d > 127:
        raise argparse.ArgumentTypeError(f"decomposition {d} outside 0..127")
    return d


def _scorer_spec(args, n_labels: int) -> ScorerSpec:
    if args.input_size < 1:
        raise UsageError("--input-size must be >= 1")
    if args.scorer == "precomputed":
        if not args.scores:
            raise UsageError("--scorer precomputed needs --scores CSV")
        return ScorerSpec("precomputed", args.input_size, {"path": str(args.scores)})
    return ScorerSpec("linear_probe", args.input_size, {"seed": args.seed, "n_labels": n_labels})


# -- subcommands ---------------------------------------------------------------


def cmd_encode(args):
    alpha = args.alpha if args.alpha is not None else _default_alpha()
    if alpha < 1 or alpha > 0xFFFF:
        raise UsageError("--alpha must lie in 1..65535")
    img = read_pgm(Path(args.input).read_bytes())
    data = serialize(encode(img, alpha))
    write_atomic(args.out, data)
    log.info("wrote %s (%d bytes)", args.out, len(data))
    return EXIT_OK


def cmd_decode(args):
    cs = parse(Path(args.input).read_bytes())
    d = cs.present_segments - 1 if args.d is None else args.d
    if d > cs.present_segments - 1:
        raise cs_mod.SegmentUnavailableError(
            f"RANGE: decomposition {d} not available (stream carries d <= {cs.present_segments - 1})"
        )
    write_atomic(args.out, write_pgm(decode_partial(cs, d)))
    return EXIT_OK


def inspect_dict(data: bytes) -> dict:
    cs = parse(data)
    h = cs.header
    plan = plan_decompositions(h.width, h.height, h.alpha)
    header_bytes = HEADER_SIZE + (h.n_levels + 1) * INDEX_ENTRY_SIZE
    segments = []
    for k, (off, length) in enumerate(cs.index):
        segments.append({
            "content": "LL" if k == 0 else f"HL/LH/HH level {h.n_levels - k + 1}",
            "length": length,
            "offset": off,
            "present": k < h.present_segments,
            "segment": k,
        })
    ladder = []
    for d, w, hh in plan.ladder:
        ladder.append({
            "available": d < h.present_segments,
            "d": d,
            "height": hh,
            "payload_prefix_bytes": cs.prefix_size(d),
            "stream_bytes": header_bytes + cs.prefix_size(d),
            "width": w,
        })
    return {
        "alpha": h.alpha,
        "bit_depth": h.bit_depth,
        "file_bytes": len(data),
        "header_bytes": header_bytes,
        "height": h.height,
        "ladder": ladder,
        "n_levels": h.n_levels,
        "present_segments": h.present_segments,
        "segments": segments,
        "version": h.version,
        "width": h.width,
    }


def cmd_inspect(args):
    info = inspect_dict(Path(args.input).read_bytes())
    if args.json:
        sys.stdout.write(_dump_json(info))
        return EXIT_OK
    out = [
        f"{args.input}: {info['width']}x{info['height']} {info['bit_depth']}-bit, "
        f"alpha={info['alpha']}, N={info['n_levels']}, "
        f"segments present {info['present_segments']}/{info['n_levels'] + 1}",
        f"header+index: {info['header_bytes']} bytes, file: {info['file_bytes']} bytes",
        "",
        f"{'seg':>3} {'offset':>10} {'length':>10}  content",
    ]
    for s in info["segments"]:
        mark = "" if s["present"] else "  (absent)"
        out.append(f"{s['segment']:>3} {s['offset']:>10} {s['length']:>10}  {s['content']}{mark}")
    out += ["", f"{'d':>3} {'resolution':>12} {'prefix bytes':>13} {'stream bytes':>13}"]
    for r in info["ladder"]:
        res = f"{r['width']}x{r['height']}"
        mark = "" if r["available"] else "  (not in file)"
        out.append(f"{r['d']:>3} {res:>12} {r['payload_prefix_bytes']:>13} {r['stream_bytes']:>13}{mark}")
    print("\n".join(out))
    return EXIT_OK


def cmd_truncate(args):
    cs = parse(Path(args.input).read_bytes())
    write_atomic(args.out, serialize(truncate(cs, args.d)))
    return EXIT_OK


def cmd_optimize(args):
    if not 0.0 <= args.significance <= 1.0:
        raise UsageError("--significance must lie in [0, 1]")
    labels = read_labels_csv(Path(args.labels).read_bytes())
    spec = _scorer_spec(args, len(labels.label_names))
    val_dir = Path(args.val_dir)
    if not val_dir.is_dir():
        raise FileNotFoundError(f"validation directory {val_dir} does not exist")
    streams = load_store(val_dir)
    if not streams:
        raise UsageError(f"no .islc files in {val_dir}")
    unlabeled = [a for a in streams if a not in labels.asset_ids]
    if unlabeled:
        raise UsageError(f"streams without labels: {unlabeled[:5]}")
    ordered = {aid: streams[aid] for aid in labels.asset_ids if aid in streams}
    first = next(iter(ordered.values())).header
    plan = plan_decompositions(first.width, first.height, first.alpha)
    report = select_optimal(ordered, labels, spec, plan, args.significance).to_dict()
    text = _dump_json(report)
    if args.report:
        write_atomic(args.report, text.encode())
        figure = args.figure or Path(args.report).with_suffix(".png")
        plot_auroc_report(report, figure)
    else:
        sys.stdout.write(text)
        if args.figure:
            plot_auroc_report(report, args.figure)
    print(f"chosen_d={report['chosen_d']}", file=sys.stderr)
    return EXIT_OK


def cmd_serve(args):
    store = load_store(args.store)
    server = StreamServer(store, args.bind)
    print(f"serving {len(store)} assets on {server.address}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_fetch(args):
    cs, nbytes = fetch(args.addr, args.asset, args.d)
    if str(args.out).endswith(".pgm"):
        d = cs.n_levels if args.d == FULL_STREAM else args.d
        write_atomic(args.out, write_pgm(decode_partial(cs, d)))
    else:
        write_atomic(args.out, serialize(cs))
    print(f"bytes_transferred={nbytes}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args):
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    assets = [ln.strip() for ln in Path(args.assets).read_text().splitlines() if ln.strip()]
    if not assets:
        raise UsageError(f"no asset ids in {args.assets}")
    spec = _scorer_spec(args, args.n_labels)
    ds = args.d or [FULL_STREAM]
    results = []
    for d in ds:
        m = run_benchmark(args.addr, assets, d, spec, workers=args.workers)
        policy = "full" if d == FULL_STREAM else f"d={d}"
        results.append({"policy": policy, "d": d, **m.as_dict()})
    rows = bench_rows(results)
    sys.stdout.write(format_delimited(rows, BENCH_COLUMNS))
    if args.report:
        doc = {"assets": len(assets), "rows": rows, "workers": args.workers}
        write_atomic(args.report, _dump_json(doc).encode())
        plot_transfer_metrics(rows, args.figure or Path(args.report).with_suffix(".png"))
    elif args.figure:
        plot_transfer_metrics(rows, args.figure)
    return EXIT_OK


def cmd_gen_synthetic(args):
    if args.n < 20 or args.size < 64 or args.labels < 1:
        raise UsageError("need --n >= 20, --size >= 64, --labels >= 1")
    alpha = args.alpha if args.alpha is not None else _default_alpha()
    if args.encode:
        plan_decompositions(args.size, args.size, alpha)
    images, table = make_synthetic_corpus(args.n, args.size, args.labels, args.seed)
    out = Path(args.out_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(dir=out.parent, prefix=f".{out.name}."))
    try:
        for aid, img in zip(table.asset_ids, images):
            (staging / f"{aid}.pgm").write_bytes(write_pgm(img))
            if args.encode:
                (staging / f"{aid}.islc").write_bytes(serialize(encode(img, alpha)))
        (staging / "labels.csv").write_bytes(write_labels_csv(table))
        (staging / "assets.txt").write_text("\n".join(table.asset_ids) + "\n")
        out.mkdir(exist_ok=True)
        for f in sorted(staging.iterdir()):
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    print(f"wrote {len(images)} images to {out}", file=sys.stderr)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _add_scorer_flags(p, n_labels_flag: bool):
    p.add_argument("--scorer", choices=("linear_probe", "precomputed"), default="linear_probe")
    p.add_argument("--input-size", type=int, default=224, help="model input side in pixels")
    p.add_argument("--seed", type=int, default=0, help="linear_probe seed")
    p.add_argument("--scores", help="precomputed scores CSV (asset_id,d,<labels>...)")
    if n_labels_flag:
        p.add_argument("--n-labels", type=int, default=1, help="linear_probe head count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="PGM -> .islc")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=int, default=None, help="smallest rung bound (default $ISLE_ALPHA or 32)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help=".islc -> PGM at decomposition d")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=_parse_d, default=None, help="default: highest available")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("inspect", help="dump header and segment index")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("truncate", help="keep segments 0..d")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d", type=_parse_d, required=True)
    p.set_defaults(func=cmd_truncate)

    p = sub.add_parser("optimize", help="choose the optimal decomposition on a validation set")
    p.add_argument("--val-dir", required=True)
    p.add_argument("--labels", required=True)
    _add_scorer_flags(p, n_labels_flag=False)
    p.add_argument("--significance", type=float, default=0.05)
    p.add_argument("--report", help="write the JSON report here (default: stdout)")
    p.add_argument("--figure", help="AUROC figure path (default: report path with .png)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("serve", help="serve a directory of .islc files")
    p.add_argument("--store", required=True)
    p.add_argument("--bind", default="127.0.0.1:7400")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fetch", help="fetch one asset at decomposition d")
    p.add_argument("--addr", required=True)
    p.add_argument("--asset", required=True)
    p.add_argument("--d", type=_parse_d, default=FULL_STREAM)
    p.add_argument("--out", required=True, help=".islc for the raw stream, .pgm to decode")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("bench", help="fetch+decode+score throughput benchmark")
    p.add_argument("--addr", required=True)
    p.add_argument("--assets", required=True, help="file with one asset id per line")
    p.add_argument("--d", type=_parse_d, action="append",
                   help="decomposition to stream; repeat to compare policies ('full' = whole stream)")
    p.add_argument("--workers", type=int, default=1)
    _add_scorer_flags(p, n_labels_flag=True)
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--figure", help="metrics figure path (default: report path with .png)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic corpus")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--labels", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--encode", action="store_true", help="also write .islc streams")
    p.add_argument("--alpha", type=int, default=None)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


_INVALID = (UsageError, FormatError, CodestreamError, PlanError, OptimizerError, MissingScoreError,
            ValueError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StreamError as exc:
        print(f"isle: server replied {exc}", file=sys.stderr)
        return EXIT_INVALID if exc.status == 3 else EXIT_IO
    except BenchmarkError as exc:
        print(f"isle: {exc}", file=sys.stderr)
        return EXIT_IO
    except StoreError as exc:
        print(f"isle: {exc}", file=sys.stderr)
        return EXIT_INVALID if isinstance(exc.__cause__, CodestreamError) else EXIT_IO
    except _INVALID as exc:
        print(f"isle: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"isle: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
