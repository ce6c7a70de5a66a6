"""Command-line front end.

Exit codes: 0 success / PASS, 2 usage or configuration, 3 data, 4 QoR FAIL.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics, veu
from .multipliers import ConfigurationError, MultiplierSpec, make_spec
from .pipeline import (EXACT_ACC, TRACE_HEADER, AccumulatorConfig, DotProductRequest, dot_product,
                       format_trace, parse_trace)
from .posit import POSIT8_2, PositScalar

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_QOR = 0, 2, 3, 4
SCHEMA_VERSION = 1
DEFAULT_QOR = 0.965

log = logging.getLogger("reap")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _emit(text: str, out: str | None) -> None:
    if out:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise DataError(f"cannot write {out}: {exc.strerror}") from None
    else:
        sys.stdout.write(text)


def _spec_from_args(args) -> MultiplierSpec:
    try:
        return make_spec(args.kind, args.width, args.t, args.lut)
    except FileNotFoundError as exc:
        raise UsageError(f"LUT file not found: {exc.filename}") from None
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None


def _parse_multiplier(text: str, width: int = 4) -> MultiplierSpec:
    """'exact', 'mitchell:2', 'dralm:3' or 'lut:path.csv'."""
    kind, _, arg = text.partition(":")
    try:
        if kind.lower() == "lut":
            return make_spec("lut", width, lut_path=arg)
        return make_spec(kind, width, int(arg) if arg else None)
    except FileNotFoundError as exc:
        raise UsageError(f"LUT file not found: {exc.filename}") from None
    except (ConfigurationError, ValueError) as exc:
        raise UsageError(f"bad multiplier {text!r}: {exc}") from None


def _metric_rows(rows, fmt: str) -> str:
    if fmt == "csv":
        return f"# schema_version={SCHEMA_VERSION}\n" + metrics.render_csv(rows)
    if fmt == "json":
        return metrics.render_json(rows)
    return f"schema_version {SCHEMA_VERSION}\n" + metrics.render_text(rows)


def _records(kind: str, fields: list[str], rows: list[dict], fmt: str, extra: dict | None = None) -> str:
    """Generic key/value report used by train / infer / codesign."""
    extra = extra or {}
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "report": kind, **extra, "rows": rows}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION} report={kind}\n")
        for k, v in extra.items():
            buf.write(f"# {k}={v}\n")
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    lines = [f"schema_version {SCHEMA_VERSION}  {kind}"]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    for r in rows:
        lines.append("  ".join(f"{k}={r[k]}" for k in fields if k in r))
    return "\n".join(lines) + "\n"


def _fmt_acc(x: float) -> str:
    return f"{x:.4f}"


def _load_data(data_dir):
    from .nn.mnist import IngestionError, load_mnist
    try:
        return load_mnist(data_dir)
    except IngestionError as exc:
        raise DataError(str(exc)) from None


def _load_config(path):
    from .nn.train import ConfigError, load_run_config
    try:
        return load_run_config(path)
    except ConfigError as exc:
        raise DataError(str(exc)) from None


def _build_net(net_spec):
    from .nn.network import Network, StructureError
    try:
        return Network(net_spec)
    except (StructureError, ValueError) as exc:
        raise DataError(f"invalid network: {exc}") from None


def _train_from_config(args):
    from .nn.train import history_dicts, train
    net_spec, cfg = _load_config(args.config)
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    net = _build_net(net_spec).init_params(cfg.seed)
    data = _load_data(args.data_dir)
    history = train(net, data, cfg)
    return net, data, cfg, history_dicts(history)


def _eval_modes(text: str) -> list[str]:
    from .nn.layers import MODES
    modes = [m.strip() for m in text.split(",") if m.strip()]
    for m in modes:
        if m not in MODES:
            raise UsageError(f"unknown mode {m!r}; choose from {', '.join(MODES)}")
    return modes


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval_mult(args) -> int:
    spec = _spec_from_args(args)
    if spec.width > 8:
        raise UsageError("exhaustive multiplier evaluation supports width <= 8")
    m = metrics.evaluate_multiplier_exhaustive(spec)
    _emit(_metric_rows([(args.name or spec.name, m)], args.format), args.out)
    return EXIT_OK


def cmd_eval_mac(args) -> int:
    spec = _spec_from_args(args)
    if spec.width != 4:
        raise UsageError("posit(8,2) significands are 4 bits wide; use --width 4")
    acc = AccumulatorConfig(mode=args.acc_mode)
    m = metrics.evaluate_mac_exhaustive(spec, acc, reference=args.reference, threads=args.threads)
    name = args.name or ("PDPU_Accurate" if spec == MultiplierSpec() else f"REAP_{spec.name}")
    _emit(_metric_rows([(name, m)], args.format), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    net, data, cfg, history = _train_from_config(args)
    from .nn.train import evaluate
    final = {m: _fmt_acc(evaluate(net, data.test, m)) for m in _eval_modes(args.eval_modes)}
    if args.out_model:
        net.save(args.out_model)
    rows = [dict(h, lr=f"{h['lr']:.6g}", loss=f"{h['loss']:.6f}", train_acc=_fmt_acc(h["train_acc"]),
                 test_acc=_fmt_acc(h["test_acc"])) for h in history]
    extra = {f"final_{m}": v for m, v in final.items()}
    extra["multiplier"] = net.spec.multiplier.name
    _emit(_records("train", ["epoch", "mode", "lr", "loss", "train_acc", "test_acc"], rows, args.format, extra),
          args.out)
    return EXIT_OK


def _load_model(path):
    from .nn.network import Network, StructureError
    try:
        return Network.load(path)
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    except (StructureError, ValueError) as exc:
        raise DataError(str(exc)) from None


def _override_multiplier(net, args):
    if args.multiplier:
        net.spec.multiplier = _parse_multiplier(args.multiplier)
    if args.lanes is not None:
        if args.lanes < 1:
            raise UsageError("--lanes must be positive")
        net.spec.lanes = args.lanes
    if args.feedback:
        net.spec.acc_feedback = args.feedback


def _test_split(data, limit):
    if not limit:
        return data.test
    if limit < 0:
        raise UsageError("--limit must be positive")
    from .nn.mnist import Split
    return Split(data.test.images[:limit], data.test.labels[:limit])


def cmd_infer(args) -> int:
    from .nn.train import evaluate
    net = _load_model(args.model)
    _override_multiplier(net, args)
    data = _load_data(args.data_dir)
    split = _test_split(data, args.limit)
    rows = [{"mode": m, "accuracy": _fmt_acc(evaluate(net, split, m)), "samples": len(split)}
            for m in _eval_modes(args.mode)]
    extra = {"multiplier": net.spec.multiplier.name, "lanes": net.spec.lanes, "feedback": net.spec.acc_feedback}
    _emit(_records("infer", ["mode", "accuracy", "samples"], rows, args.format, extra), args.out)
    return EXIT_OK


def cmd_codesign(args) -> int:
    from .nn.train import evaluate
    if not 0 <= args.qor <= 1:
        raise UsageError(f"--qor must lie in [0, 1], got {args.qor}")
    if args.model:
        net = _load_model(args.model)
        _override_multiplier(net, args)
        data = _load_data(args.data_dir)
    else:
        net, data, _, _ = _train_from_config(args)
        _override_multiplier(net, args)
    acc = evaluate(net, _test_split(data, args.limit), "approx_posit")
    verdict = "PASS" if acc >= args.qor else "FAIL"
    spec = net.spec.multiplier
    m = metrics.evaluate_mac_exhaustive(spec, EXACT_ACC, threads=args.threads)
    row = {"multiplier": spec.name, "accuracy": _fmt_acc(acc), "qor": f"{args.qor:.4f}", "verdict": verdict,
           "error_pct": f"{m.error_pct:.2f}", "nmed": f"{m.nmed:.6e}", "mred": f"{m.mred:.6e}",
           "wce": f"{m.wce:.6e}"}
    _emit(_records("codesign", list(row), [row], args.format), args.out)
    if args.out_model and not args.model:
        net.save(args.out_model)
    print(f"{verdict}: approx_posit accuracy {acc:.4f} vs QoR {args.qor:.4f}", file=sys.stderr)
    return EXIT_OK if verdict == "PASS" else EXIT_QOR


def cmd_cycles(args) -> int:
    from .nn.network import LENET5_LAYERS
    layers, shape = LENET5_LAYERS, (1, 28, 28)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
            layers = doc["layers"]
            shape = tuple(doc.get("input_shape", shape))
            if not isinstance(layers, list) or len(shape) != 3:
                raise ValueError("layers must be a list and input_shape a 3-tuple")
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed config {args.config}: {exc}") from None
    try:
        plan = veu.layer_report(layers, args.n_macs, shape, args.pipeline_fill)
    except (veu.GeometryError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cycle model: {exc}") from None
    _emit(veu.render(plan, args.n_macs, args.format), args.out)
    return EXIT_OK


def _random_request(rng: np.random.Generator, lanes: int, spec: MultiplierSpec) -> DotProductRequest:
    bits = rng.integers(0, 1 << POSIT8_2.n, size=2 * lanes + 1)
    va = [PositScalar(int(b)) for b in bits[:lanes]]
    vb = [PositScalar(int(b)) for b in bits[lanes:2 * lanes]]
    return DotProductRequest(va, vb, PositScalar(int(bits[-1])), spec)


def check_vectors(lines, spec: MultiplierSpec) -> int:
    """Re-run every trace line; return the number of lines checked."""
    n = 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        rec = parse_trace(line)
        req = DotProductRequest([PositScalar(b) for b in rec["va"]], [PositScalar(b) for b in rec["vb"]],
                                PositScalar(rec["acc"]), spec)
        _, trace = dot_product(req)
        if format_trace(req, trace) != line.rstrip("\n"):
            raise DataError(f"line {lineno}: trace does not reproduce")
        n += 1
    return n


def cmd_dump_vectors(args) -> int:
    spec = _parse_multiplier(args.multiplier)
    if args.check:
        try:
            lines = Path(args.check).read_text().splitlines()
        except OSError as exc:
            raise DataError(f"cannot read {args.check}: {exc.strerror}") from None
        n = check_vectors(lines, spec)
        print(f"{n} vectors verified", file=sys.stderr)
        return EXIT_OK
    if args.count < 0 or args.lanes < 1:
        raise UsageError("--count must be >= 0 and --lanes >= 1")
    rng = np.random.default_rng(args.seed)
    out = [f"# schema_version={SCHEMA_VERSION} multiplier={spec.name} seed={args.seed} lanes={args.lanes}",
           TRACE_HEADER]
    for _ in range(args.count):
        req = _random_request(rng, args.lanes, spec)
        _, trace = dot_product(req)
        out.append(format_trace(req, trace))
    _emit("\n".join(out) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common_options() -> argparse.ArgumentParser:
    # a fresh parser per use: parents share Action objects, so defaults must not leak between levels
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json", "text"), default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reap", description=__doc__.splitlines()[0], parents=[_common_options()])
    p.set_defaults(format="csv", threads=1, out=None, verbose=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    common = _common_options()

    def mult_args(sp):
        sp.add_argument("--kind", default="exact", help="exact | mitchell | dralm | lut")
        sp.add_argument("--t", type=int, default=None, help="truncation width (default: operand width)")
        sp.add_argument("--lut", default=None, help="LUT CSV (a,b,product) for --kind lut")
        sp.add_argument("--width", type=int, default=4)
        sp.add_argument("--name", default=None, help="design name in the report")

    sp = sub.add_parser("eval-mult", parents=[common], help="exhaustive multiplier error")
    mult_args(sp)
    sp.set_defaults(func=cmd_eval_mult)

    sp = sub.add_parser("eval-mac", parents=[common], help="exhaustive posit(8,2) MAC error")
    mult_args(sp)
    sp.add_argument("--acc-mode", choices=("exact", "truncate"), default="exact")
    sp.add_argument("--reference", choices=("rounded", "real"), default="rounded")
    sp.set_defaults(func=cmd_eval_mac)

    def model_override(sp):
        sp.add_argument("--multiplier", default=None, help="override: exact | mitchell:T | dralm:T | lut:PATH")
        sp.add_argument("--lanes", type=int, default=None)
        sp.add_argument("--feedback", choices=("posit", "wide"), default=None)

    sp = sub.add_parser("train", parents=[common], help="train per config (reference recipe by default)")
    sp.add_argument("--config", default=None)
    sp.add_argument("--data-dir", default=None)
    sp.add_argument("--out-model", default=None)
    sp.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    sp.add_argument("--eval-modes", default="fp32,approx_posit")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", parents=[common], help="evaluate a checkpoint on the test split")
    sp.add_argument("--model", required=True)
    sp.add_argument("--data-dir", default=None)
    sp.add_argument("--mode", default="approx_posit", help="comma list of fp32, fake_quant, approx_posit")
    sp.add_argument("--limit", type=int, default=None, help="first N test images only")
    model_override(sp)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("codesign", parents=[common], help="train/load, then gate approx accuracy on QoR")
    sp.add_argument("--config", default=None)
    sp.add_argument("--model", default=None, help="evaluate this checkpoint instead of training")
    sp.add_argument("--data-dir", default=None)
    sp.add_argument("--qor", type=float, default=DEFAULT_QOR)
    sp.add_argument("--limit", type=int, default=None, help="first N test images only")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--out-model", default=None)
    model_override(sp)
    sp.set_defaults(func=cmd_codesign)

    sp = sub.add_parser("cycles", parents=[common], help="VEU cycle estimate per layer")
    sp.add_argument("--config", default=None, help="JSON with layers[] (default LeNet-5)")
    sp.add_argument("--n-macs", type=int, required=True)
    sp.add_argument("--pipeline-fill", type=int, default=5)
    sp.set_defaults(func=cmd_cycles)

    sp = sub.add_parser("dump-vectors", parents=[common], help="random MAC stimulus with full traces")
    sp.add_argument("--count", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--lanes", type=int, default=4)
    sp.add_argument("--multiplier", default="exact")
    sp.add_argument("--check", default=None, metavar="FILE", help="re-verify an existing dump instead")
    sp.set_defaults(func=cmd_dump_vectors)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s",
                        stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"reap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"reap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
