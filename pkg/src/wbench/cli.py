"""Command-line entry point.

Results go to stdout (JSON or bare numbers); diagnostics go to stderr.
Exit codes: 0 ok, 1 usage error, 2 runtime error, 3 watermark not detected
(``extract --truth``).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .attacks import KINDS, LADDER_VERSION, NONE, AttackError, AttackSpec, apply_attack, ladder_table
from .bench import (
    DEFAULT_AMPLITUDE, REPORT_SCHEMA, SPECTRAL_SCHEMA, frequency_analysis, render_heatmap,
    run_benchmark, write_bench_outputs, write_report,
)
from .corpus import DirCorpus, write_corpus
from .imagecore import load_image, save_image
from .spectral import BandSpec
from .stats import fpr_at_tau, tau_for_target_fpr, tpr_at_tau, verify
from .watermark import (
    METHODS, BitMessage, WatermarkKey, canonical_method, capacity, default_key, scaled_embed,
    scaled_extract,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_NEGATIVE = 0, 1, 2, 3
CORPUS_ENV = "WBENCH_CORPUS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _out(obj) -> None:
    if isinstance(obj, (dict, list)):
        print(json.dumps(obj, sort_keys=True))
    else:
        print(obj)


def _method_arg(text: str) -> str:
    try:
        return canonical_method(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _severity_arg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"severity must be an integer, got {text!r}") from None
    if not 1 <= v <= 5:
        raise argparse.ArgumentTypeError(f"severity {v} outside 1..5")
    return v


def _seed_arg(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _attack_list_arg(text: str) -> AttackSpec:
    text = text.strip().lower()
    if text == NONE:
        return AttackSpec(NONE, 0)
    kind, _, sev = text.partition("@")
    if kind not in KINDS:
        raise argparse.ArgumentTypeError(f"unknown attack kind {kind!r}")
    return AttackSpec(kind, _severity_arg(sev or "1"))


def _load_key(path, method) -> WatermarkKey:
    if path is None:
        return default_key(method)
    return WatermarkKey.from_json(Path(path).read_text())


def _corpus_dir(args) -> str:
    d = args.corpus or os.environ.get(CORPUS_ENV)
    if not d:
        raise UsageError(f"--corpus is required (or set {CORPUS_ENV})")
    return d


# ---------------------------------------------------------------------------

def cmd_embed(args) -> int:
    key = _load_key(args.key, args.method)
    msg = BitMessage.from_hex(args.msg, capacity(args.method))
    img = load_image(args.input)
    save_image(args.output, scaled_embed(args.method, img, msg, key))
    print(f"wrote {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_extract(args) -> int:
    key = _load_key(args.key, args.method)
    img = load_image(args.input)
    decoded, soft = scaled_extract(args.method, img, key)
    result = {"method": args.method, "message": decoded.to_hex(),
              "soft_mean": float(soft.mean())}
    code = EXIT_OK
    if args.truth is not None:
        truth = BitMessage.from_hex(args.truth, decoded.k)
        det = verify(decoded, truth, decoded.k, args.p_o, args.fpr)
        result.update({
            "bit_accuracy": det.bit_accuracy,
            "matched": det.matched,
            "tau": det.tau,
            "fpr_at_tau": det.fpr_at_tau,
            "target_fpr": args.fpr,
            "detected": det.decision,
        })
        if not det.decision:
            code = EXIT_NEGATIVE
    _out(result)
    return code


def cmd_attack(args) -> int:
    if args.list:
        _out(ladder_table())
        return EXIT_OK
    missing = [f for f in ("input", "output", "kind", "severity") if getattr(args, f) is None]
    if missing:
        raise UsageError("attack: missing " + ", ".join("--" + m for m in missing))
    img = load_image(args.input)
    spec = AttackSpec(args.kind, args.severity, args.seed)
    save_image(args.output, apply_attack(img, spec))
    print(f"wrote {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    corpus = DirCorpus(_corpus_dir(args), args.limit)
    band = BandSpec.named(args.band)
    if args.kind == NONE:
        attack = AttackSpec(NONE, 0)
    else:
        if args.severity is None:
            raise UsageError("analyze: --severity is required")
        attack = AttackSpec(args.kind, args.severity, args.seed)
    report = frequency_analysis(corpus, band, attack, args.amp, luminance=args.luminance)
    config = {"command": "analyze", "corpus": str(args.corpus or os.environ.get(CORPUS_ENV)),
              "band": args.band, "kind": args.kind, "severity": args.severity,
              "seed": args.seed, "amp": args.amp, "luminance": args.luminance,
              "limit": args.limit}
    write_report(report, "json", args.output, config=config)
    if args.heatmap:
        render_heatmap(report.mean_diff_map, args.heatmap)
    _out({"retention_low": report.retention_low, "retention_mid": report.retention_mid,
          "retention_high": report.retention_high, "report": str(args.output)})
    return EXIT_OK


def cmd_bench(args) -> int:
    corpus = DirCorpus(_corpus_dir(args), args.limit)
    keys = {}
    for m in args.methods:
        keys[m] = default_key(m, seed=args.seed)
    if args.key:
        for spec in args.key:
            m, _, path = spec.partition("=")
            keys[canonical_method(m)] = WatermarkKey.from_json(Path(path).read_text())

    def progress(done, total):
        if args.verbose:
            print(f"[{done}/{total}]", file=sys.stderr)

    result = run_benchmark(corpus, args.methods, args.attacks, keys, master_seed=args.seed,
                           p_o=args.p_o, workers=args.workers, progress=progress)
    paths = write_bench_outputs(result, args.out)
    _out({"records": len(result.records), "corpus_hash": result.corpus_hash,
          "outputs": [str(p) for p in paths]})
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.what in ("fpr", "tpr") and args.tau is None:
        raise UsageError(f"stats {args.what}: --tau is required")
    if args.what == "tau" and args.target is None:
        raise UsageError("stats tau: --target is required")
    if args.what == "fpr":
        _out(repr(fpr_at_tau(args.k, args.tau, args.p)))
    elif args.what == "tpr":
        _out(repr(tpr_at_tau(args.k, args.tau, args.p)))
    else:
        _out(tau_for_target_fpr(args.k, args.p, args.target))
    return EXIT_OK


def cmd_corpus(args) -> int:
    manifest = write_corpus(args.out, args.n, args.size, args.seed)
    _out({"manifest": str(manifest), "n": args.n, "size": args.size, "seed": args.seed})
    return EXIT_OK


def cmd_key(args) -> int:
    key = default_key(args.method, seed=args.seed)
    text = key.to_json()
    if args.output:
        Path(args.output).write_text(text + "\n")
    _out(json.loads(text))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="store_true",
                   help="print package, report-schema and ladder versions")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("embed", help="watermark an image")
    s.add_argument("-m", "--method", type=_method_arg, required=True, help="|".join(METHODS))
    s.add_argument("-i", "--input", required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--msg", required=True, help="message as hex")
    s.add_argument("--key", help="key JSON file (default: method default key)")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("extract", help="decode a watermark")
    s.add_argument("-m", "--method", type=_method_arg, required=True)
    s.add_argument("-i", "--input", required=True)
    s.add_argument("--key")
    s.add_argument("--truth", help="reference message as hex; enables detection")
    s.add_argument("--fpr", type=float, default=1e-3, help="target false-positive rate")
    s.add_argument("--p-o", dest="p_o", type=float, default=0.5,
                   help="null per-bit match probability")
    s.set_defaults(func=cmd_extract)

    for name in ("attack", "attacks"):
        s = sub.add_parser(name, help="apply a distortion (or --list the ladder)")
        s.add_argument("--list", action="store_true", help="dump the severity ladder as JSON")
        s.add_argument("-i", "--input")
        s.add_argument("-o", "--output")
        s.add_argument("--kind", choices=KINDS)
        s.add_argument("--severity", type=_severity_arg)
        s.add_argument("--seed", type=_seed_arg, default=0)
        s.set_defaults(func=cmd_attack)

    s = sub.add_parser("analyze", help="ring-pattern retention analysis over a corpus")
    s.add_argument("--corpus")
    s.add_argument("--band", choices=("low", "mid", "high"), required=True)
    s.add_argument("--kind", choices=KINDS + (NONE,), required=True)
    s.add_argument("--severity", type=_severity_arg)
    s.add_argument("--seed", type=_seed_arg, default=0)
    s.add_argument("--amp", type=float, default=DEFAULT_AMPLITUDE)
    s.add_argument("--luminance", action="store_true", help="analyse luminance only")
    s.add_argument("--limit", type=int)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--heatmap")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("bench", help="run the robustness benchmark")
    s.add_argument("--corpus")
    s.add_argument("--methods", nargs="+", type=_method_arg, default=list(METHODS))
    s.add_argument("--attacks", nargs="+", type=_attack_list_arg,
                   default=[AttackSpec(NONE, 0)], help="kind@severity or none")
    s.add_argument("--key", action="append", help="METHOD=key.json override")
    s.add_argument("--seed", type=_seed_arg, default=0, help="master seed")
    s.add_argument("--p-o", dest="p_o", type=float, default=0.5)
    s.add_argument("--limit", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("stats", help="closed-form detection statistics")
    s.add_argument("what", choices=("fpr", "tpr", "tau"))
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--tau", type=int)
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--target", type=float)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("corpus", help="write a synthetic corpus with manifest")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--size", type=int, default=512)
    s.add_argument("--seed", type=_seed_arg, default=0)
    s.set_defaults(func=cmd_corpus)

    s = sub.add_parser("key", help="print (and optionally save) a method's default key")
    s.add_argument("-m", "--method", type=_method_arg, required=True)
    s.add_argument("--seed", type=_seed_arg, default=0)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_key)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            _out({"version": __version__, "report_schema": REPORT_SCHEMA,
                  "spectral_schema": SPECTRAL_SCHEMA, "ladder_version": LADDER_VERSION})
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, AttackError) as exc:
        print(f"wbench: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def dispatch(argv) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
