"""``oascen`` command-line interface.

Subcommands: ``ingest``, ``train``, ``generate``, ``evaluate`` and ``replay``.
Each run writes a manifest next to its outputs; ``replay`` re-executes a
manifest and checks the outputs hash to the recorded values.

Exit codes: 0 ok, 2 validation, 3 solver, 4 I/O. Failures print exactly one
JSON line on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import load_bundle, load_manifest, save_bundle, sha256, write_manifest
from .dataprep import SignMode, load_csv, read_errors_csv, split_dataset, write_errors_csv, \
    normalized_error
from .errors import ConfigError, DataIOError, OascenError, ValidationError
from .evalharness import DownwardTest, FieldsCase, NoneCase, RobustCase, evaluate, \
    write_case_table
from .grid import load_grid
from .neuralnet import NoiseSpec, load_checkpoint, save_checkpoint
from .oacgan import InfeasiblePolicy, TrainConfig, UpdateOrder, generate, network_specs, train
from .opf import ScaleConstants
from .parallel import thread_count

log = logging.getLogger("oascen")

PATH_OPTS = ("load_csv", "grid", "out", "bundle", "checkpoint")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _diag(exc: BaseException, code: int) -> str:
    return json.dumps({"status": "error", "exit_code": code, "kind": type(exc).__name__,
                       "message": " ".join(str(exc).split())}, sort_keys=True)


def _ok(**fields) -> None:
    print(json.dumps({"status": "ok", **fields}, sort_keys=True))


def _abs_argv(ns) -> list[str]:
    """Canonical argv for the manifest, with paths made absolute."""
    out = [ns.command]
    for key, val in sorted(vars(ns).items()):
        if key in ("command", "func") or val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        vals = val if isinstance(val, list) else [val]
        for v in vals:
            if key in PATH_OPTS:
                v = str(Path(v).resolve())
            if v is True:
                out.append(flag)
            else:
                out.extend([flag, str(v)])
    return out


# -- ingest -------------------------------------------------------------

def cmd_ingest(ns) -> int:
    grid = load_grid(ns.grid)
    rep = load_csv(ns.load_csv, zones=grid.nodes, horizon=ns.horizon)
    n = len(rep.samples)
    if n == 0:
        raise ValidationError("no complete, non-flat days in the load file")
    n_train = ns.n_train if ns.n_train is not None else max(1, min(n - 1, round(n * 10 / 11)))
    if n == 1 and ns.n_train is None:
        train_s, test_s = rep.samples, []
    elif n_train == n:
        train_s, test_s = rep.samples, []
    else:
        train_s, test_s = split_dataset(rep.samples, n_train, ns.split_seed)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    dropped = {"incomplete": [d.isoformat() for d in rep.dropped_incomplete],
               "flat": [d.isoformat() for d in rep.dropped_flat]}
    bundle = out / "bundle.json"
    save_bundle(bundle, grid.nodes, train_s, test_s, dropped)
    errs = out / "errors.csv"
    samples = sorted(rep.samples, key=lambda s: s.date)
    write_errors_csv(errs, grid.nodes, [s.date.isoformat() for s in samples],
                     [normalized_error(s) for s in samples])
    manifest = out / "manifest.json"
    write_manifest(manifest, "ingest", _abs_argv(ns), {"horizon": ns.horizon, "n_train": len(train_s),
                                                       "split_seed": ns.split_seed},
                   [ns.load_csv, ns.grid], [bundle, errs], seed=ns.split_seed)
    _ok(command="ingest", days_kept=n, days_train=len(train_s), days_test=len(test_s),
        dropped_incomplete=len(rep.dropped_incomplete), dropped_flat=len(rep.dropped_flat),
        manifest=str(manifest))
    return 0


# -- train --------------------------------------------------------------

def _train_config(ns) -> TrainConfig:
    return TrainConfig(
        k=ns.k, alpha=ns.alpha, alpha_g2=ns.alpha_g2, batch_size=ns.batch, epoch_max=ns.epochs,
        noise=NoiseSpec(ns.n_z), scale=ScaleConstants(ns.delta_shift, ns.delta_scale),
        seed=ns.seed, infeasible_policy=InfeasiblePolicy(ns.infeasible_policy),
        penalty_weight=ns.penalty_weight, sign=SignMode(ns.sign), hidden=ns.hidden,
        output_range=ns.output_range, update_order=UpdateOrder(ns.update_order),
    )


def cmd_train(ns) -> int:
    try:
        cfg = _train_config(ns)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    grid = load_grid(ns.grid)
    bundle = load_bundle(ns.bundle)
    if bundle.zones != grid.nodes:
        raise ValidationError(f"bundle zones {list(bundle.zones)} differ from grid nodes {list(grid.nodes)}")
    data = bundle.select(ns.split)
    theta_g, theta_d, trace = train(data, grid, cfg)
    g_spec, d_spec = network_specs(cfg, grid.n_nodes, bundle.horizon)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt, trace_csv, manifest = out / "checkpoint.json", out / "trace.csv", out / "manifest.json"
    meta = {"zones": list(grid.nodes), "horizon": bundle.horizon, "config": cfg.to_dict(),
            "n_infeasible": trace.n_infeasible, "n_degenerate": trace.n_degenerate}
    save_checkpoint(ckpt, {"generator": (g_spec, theta_g), "discriminator": (d_spec, theta_d)}, meta)
    trace.to_csv(trace_csv)
    write_manifest(manifest, "train", _abs_argv(ns), cfg.to_dict(), [ns.bundle, ns.grid],
                   [ckpt, trace_csv], seed=cfg.seed)
    _ok(command="train", epochs=len(trace.epoch), final_loss_d=trace.loss_d[-1],
        final_loss_g=trace.loss_g[-1], infeasible=sum(trace.n_infeasible),
        manifest=str(manifest))
    return 0


# -- generate -----------------------------------------------------------

def cmd_generate(ns) -> int:
    nets, meta = load_checkpoint(ns.checkpoint)
    if "generator" not in nets:
        raise ValidationError(f"{ns.checkpoint} holds no generator")
    g_spec, theta_g = nets["generator"]
    zones, horizon = meta["zones"], int(meta["horizon"])
    noise = NoiseSpec(int(meta["config"]["n_z"]))
    shape = (len(zones), horizon)
    if ns.bundle is not None:
        # one field per day of the split, conditioned on that day's label
        days = load_bundle(ns.bundle).select(ns.split)
        tags, fields = [], []
        for j, s in enumerate(days):
            tags.append(s.date.isoformat())
            fields.extend(generate(g_spec, theta_g, s.label, 1, noise, [ns.seed, j], shape))
        inputs = [ns.checkpoint, ns.bundle]
    else:
        if ns.label is None or ns.n is None:
            raise ConfigError("generate needs --label and --n, or --bundle")
        if not 0 <= ns.label < g_spec.n_labels:
            raise ValidationError(f"label {ns.label} outside vocabulary 0..{g_spec.n_labels - 1}")
        if ns.n < 0:
            raise ValidationError("--n must be nonnegative")
        fields = generate(g_spec, theta_g, ns.label, ns.n, noise, ns.seed, shape)
        tags = [str(i) for i in range(len(fields))]
        inputs = [ns.checkpoint]
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_errors_csv(out, zones, tags, fields)
    manifest = out.with_name(out.name + ".manifest.json")
    write_manifest(manifest, "generate", _abs_argv(ns), {"label": ns.label, "n": len(fields)},
                   inputs, [out], seed=ns.seed)
    _ok(command="generate", fields=len(fields), rows=len(fields) * len(zones) * horizon,
        manifest=str(manifest))
    return 0


# -- evaluate -----------------------------------------------------------

def _parse_source(src: str, test, zones, horizon):
    kind, _, arg = src.partition(":")
    if kind == "none" and not arg:
        return NoneCase()
    if kind == "robust":
        try:
            return RobustCase(float(arg))
        except ValueError:
            raise ConfigError(f"bad robust level in {src!r}") from None
    if kind == "generated" and arg:
        tags, arrays = read_errors_csv(arg, zones, horizon)
        dates = [s.date.isoformat() for s in test]
        by_tag = dict(zip(tags, arrays))
        if set(dates) <= set(by_tag):
            arrays = [by_tag[d] for d in dates]
        elif len(arrays) != len(test):
            raise ValidationError(f"{arg} holds {len(arrays)} error fields for {len(test)} test days")
        from .dataprep import ErrorField, ErrorKind
        return FieldsCase(tuple(ErrorField(a, ErrorKind.NORMALIZED) for a in arrays), src)
    raise ConfigError(f"unknown error source {src!r}; use none, robust:<r> or generated:<csv>")


def cmd_evaluate(ns) -> int:
    grid = load_grid(ns.grid)
    bundle = load_bundle(ns.bundle)
    if bundle.zones != grid.nodes:
        raise ValidationError(f"bundle zones {list(bundle.zones)} differ from grid nodes {list(grid.nodes)}")
    test = bundle.select(ns.split)
    if not test:
        raise ValidationError(f"bundle has no {ns.split!r} days")
    sources = ns.error_source or ["none"]
    cases = [_parse_source(s, test, grid.nodes, bundle.horizon) for s in sources]
    sign, downward = SignMode(ns.sign), DownwardTest(ns.downward)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, details = [], []
    for case, src in zip(cases, sources):
        per_day = []
        m = evaluate(test, case.errors(test, sign), grid, sign, downward, case_id=src,
                     details=per_day, allocation=ns.allocation)
        rows.append(m)
        details.extend((src, d) for d in per_day)
    metrics = out / "metrics.jsonl"
    metrics.write_text("".join(m.to_json() + "\n" for m in rows))
    table = out / "table.csv"
    write_case_table(table, rows)
    detail_csv = out / "details.csv"
    _write_case_details(detail_csv, details)
    inputs = [ns.bundle, ns.grid] + [s.partition(":")[2] for s in sources
                                     if s.startswith("generated:")]
    manifest = out / "manifest.json"
    write_manifest(manifest, "evaluate", _abs_argv(ns), {"sources": sources, "sign": sign.value,
                                                         "downward": downward.value, "split": ns.split,
                                                         "allocation": ns.allocation},
                   inputs, [metrics, table, detail_csv])
    _ok(command="evaluate", cases=[m.record() for m in rows], manifest=str(manifest))
    return 0


def _write_case_details(path, details) -> None:
    import csv
    from .evalharness import DETAIL_HEADER
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("case_id",) + DETAIL_HEADER)
        for case_id, r in details:
            vals = [getattr(r, k) for k in DETAIL_HEADER]
            w.writerow([case_id] + [repr(v) if isinstance(v, float) else v for v in vals])


# -- replay -------------------------------------------------------------

def cmd_replay(ns) -> int:
    doc = load_manifest(ns.manifest)
    for path, digest in doc["inputs"].items():
        if sha256(path) != digest:
            raise ValidationError(f"input {path} changed since the manifest was written")
    argv = list(doc["argv"])
    if argv and argv[0] == "replay":
        raise ConfigError("a replay manifest cannot be replayed")
    with contextlib.redirect_stdout(io.StringIO()):
        code = _dispatch(argv)
    if code:
        return code
    changed = [p for p, d in doc["outputs"].items() if sha256(p) != d]
    if changed:
        raise ValidationError(f"replay produced different bytes for {changed}")
    _ok(command="replay", outputs=len(doc["outputs"]), identical=True)
    return 0


# -- parser -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oascen", description="Operation-adversarial scenario generation toolkit")
    p.add_argument("--version", action="version", version=f"oascen {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="CSV of DA/RT loads -> dataset bundle")
    s.add_argument("--load-csv", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--horizon", type=int, default=24)
    s.add_argument("--n-train", type=int)
    s.add_argument("--split-seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="train the generator and discriminator")
    s.add_argument("--bundle", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=float, default=0.8)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch", type=int, default=100)
    s.add_argument("--alpha", type=float, default=1e-3)
    s.add_argument("--alpha-g2", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-z", type=int, default=16)
    s.add_argument("--hidden", type=int, default=128)
    s.add_argument("--output-range", type=float, default=2.5)
    s.add_argument("--delta-shift", type=float, default=2e8)
    s.add_argument("--delta-scale", type=float, default=8e5)
    s.add_argument("--sign", choices=[m.value for m in SignMode], default=SignMode.ROUND_TRIP.value)
    s.add_argument("--infeasible-policy", choices=[m.value for m in InfeasiblePolicy],
                   default=InfeasiblePolicy.SKIP.value)
    s.add_argument("--penalty-weight", type=float, default=1.0)
    s.add_argument("--update-order", choices=[m.value for m in UpdateOrder],
                   default=UpdateOrder.ALGORITHM.value)
    s.add_argument("--split", choices=("train", "test", "all"), default="train")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("generate", help="draw error fields from a trained generator")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--label", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--bundle", help="draw one field per bundle day with that day's label")
    s.add_argument("--split", choices=("train", "test", "all"), default="test")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("evaluate", help="reserve cost and security levels of error sources")
    s.add_argument("--bundle", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--error-source", action="append",
                   help="none | robust:<r> | generated:<csv>; repeatable")
    s.add_argument("--sign", choices=[m.value for m in SignMode], default=SignMode.ROUND_TRIP.value)
    s.add_argument("--downward", choices=[m.value for m in DownwardTest],
                   default=DownwardTest.SIGNED.value)
    s.add_argument("--allocation", choices=("tiebreak", "merit"), default="tiebreak",
                   help="how reserves are split across units (same DA cost either way)")
    s.add_argument("--split", choices=("train", "test", "all"), default="test")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("replay", help="re-run a manifest and verify identical outputs")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_replay)
    return p


def _dispatch(argv) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    thread_count()  # validate OASCEN_THREADS up front
    return ns.func(ns)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        with np.errstate(all="ignore"):
            return _dispatch(argv)
    except OascenError as exc:
        return _fail(exc, exc.exit_code)
    except OSError as exc:
        return _fail(DataIOError(str(exc)), 4)
    except (KeyError, ValueError, TypeError) as exc:
        return _fail(exc, 2)


def _fail(exc: BaseException, code: int) -> int:
    print(_diag(exc, code), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
