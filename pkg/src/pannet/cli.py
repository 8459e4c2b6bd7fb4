"""Command-line entry point: ``pannet {train,eval,inspect-met,gradcheck,ingest}``.

Exit codes: 0 success, 2 configuration error, 3 data/checkpoint error,
4 numeric failure (NaN/Inf), 5 gradient check failure.

Configuration precedence for ``train``: built-in defaults, then the JSON
config file, then explicit command-line flags, then ``--set key=value``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import Dataset, load_dataset, load_json_graphs, load_ogb_raw, make_synthetic, save_json_graphs
from .errors import CheckpointError, ConfigError, DataError, NonFiniteValue, PanError
from .gradcheck import check_model, default_config
from .met import Normalization, PathWeights, boltzmann_weights, met_matrix
from .model import ModelConfig, count_parameters
from .training import evaluate_auc, num_threads, train

log = logging.getLogger("pannet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_GRADCHECK = 0, 2, 3, 4, 5

RUN_KEYS = {"dataset", "out_dir", "runs", "synthetic_graphs", "synthetic_seed"}


@dataclasses.dataclass
class RunConfig:
    model: ModelConfig
    dataset: str | None = None
    out_dir: str = "runs"
    runs: int = 1
    synthetic_graphs: int = 40
    synthetic_seed: int = 7

    @classmethod
    def from_flat(cls, values: dict) -> "RunConfig":
        run = {k: values[k] for k in RUN_KEYS & set(values)}
        model = {k: v for k, v in values.items() if k not in RUN_KEYS}
        cfg = cls(ModelConfig.from_dict(model), **run)
        if cfg.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {cfg.runs}")
        if cfg.dataset is None:
            raise ConfigError("no dataset given (config key 'dataset' or --dataset)")
        return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        values = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise ConfigError("config file must hold a flat JSON object")
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"config keys must be flat; nested objects under {nested}")
    return values


def _merge(args, flag_keys) -> dict:
    values = _read_config(args.config)
    for key in flag_keys:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = _parse_value(v)
    return values


def _load(path: str, synthetic_graphs: int = 40, synthetic_seed: int = 7) -> Dataset:
    if str(path).lower() in ("synthetic", "synthetic:triangle"):
        return make_synthetic("TriangleDetection", synthetic_graphs, synthetic_seed)
    if not Path(path).exists():
        raise DataError(f"dataset path {path} does not exist")
    return load_dataset(path)


def _fmt_pm(values) -> str:
    vals = np.array([v for v in values if v is not None], dtype=np.float64) * 100
    if vals.size == 0:
        return "n/a"
    std = vals.std(ddof=1) if vals.size > 1 else 0.0
    return f"{vals.mean():.2f} ± {std:.2f}"


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    cfg = RunConfig.from_flat(_merge(args, ("dataset", "runs", "seed", "out_dir", "epochs",
                                            "variant", "emb_dim", "batch_size", "learning_rate")))
    ds = _load(cfg.dataset, cfg.synthetic_graphs, cfg.synthetic_seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(k: int):
        mc = dataclasses.replace(cfg.model, seed=cfg.model.seed + k)
        log_path = out / f"run{k}.jsonl"
        with log_path.open("w") as fh:
            result = train(mc, ds, on_epoch=lambda r: fh.write(r.to_json() + "\n"), workers=1)
        checkpoint.save(result.model, out / f"run{k}.panw")
        best = result.best
        train_auc = evaluate_auc(result.model, ds.subset("train"), workers=1)
        return {
            "run": k, "seed": mc.seed, "best_epoch": result.best_epoch,
            "val_auc": best.val_auc if best else None,
            "test_auc": best.test_auc if best else None,
            "train_auc": train_auc,
            "params": count_parameters(result.model).total,
        }

    workers = min(num_threads(), cfg.runs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(cfg.runs)))
    else:
        runs = [one(k) for k in range(cfg.runs)]

    summary = {
        "variant": cfg.model.variant,
        "runs": runs,
        "val_auc": _fmt_pm(r["val_auc"] for r in runs),
        "test_auc": _fmt_pm(r["test_auc"] for r in runs),
        "train_auc": _fmt_pm(r["train_auc"] for r in runs),
        "params": runs[0]["params"],
        "config": cfg.model.to_dict(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"{'Model':<6} {'ROC-AUC Val':>16} {'ROC-AUC Test':>16} {'ROC-AUC Train':>16} {'#Params':>9}")
    print(f"{summary['variant']:<6} {summary['val_auc']:>16} {summary['test_auc']:>16} "
          f"{summary['train_auc']:>16} {summary['params']:>9,d}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model = checkpoint.load(args.checkpoint)
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.emb_dim is not None and args.emb_dim != model.config.emb_dim:
        raise ConfigError(f"checkpoint has emb_dim {model.config.emb_dim}, requested {args.emb_dim}")
    ds = _load(args.dataset)
    graphs = ds.subset(args.split)
    auc = evaluate_auc(model, graphs)
    if args.json:
        print(json.dumps({"split": args.split, "graphs": len(graphs), "roc_auc": auc}))
    else:
        print(f"{args.split} ROC-AUC: {'undefined' if auc is None else f'{auc:.6f}'} ({len(graphs)} graphs)")
    return EXIT_OK


def cmd_inspect_met(args) -> int:
    ds = load_json_graphs(args.graph_file) if not Path(args.graph_file).is_dir() else load_ogb_raw(args.graph_file)
    if not 0 <= args.index < len(ds.graphs):
        raise DataError(f"graph index {args.index} outside [0, {len(ds.graphs)})")
    g = ds.graphs[args.index]
    try:
        weights = boltzmann_weights(args.cutoff, args.temperature)
        norm = Normalization.parse(args.normalization)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    met = met_matrix(g, weights, norm)
    ranking = [int(i) for i in np.lexsort((np.arange(g.num_nodes), -met.diag))]
    if args.json:
        print(json.dumps({
            "index": args.index, "num_nodes": g.num_nodes, "cutoff": args.cutoff,
            "temperature": args.temperature, "normalization": norm.value,
            "weights": weights.w.tolist(), "met": met.m.tolist(),
            "diag": met.diag.tolist(), "z": met.z.tolist(), "ranking": ranking,
        }))
        return EXIT_OK
    with np.printoptions(precision=6, suppress=True, linewidth=120):
        print(f"graph {args.index}: {g.num_nodes} nodes, {g.num_edges} edges, "
              f"L={args.cutoff}, T={args.temperature}, normalization={norm.value}")
        print("MET matrix:")
        print(met.m)
        print("diag(M):", met.diag)
        print("ranking by diag(M):", ranking)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    values = _read_config(args.config)
    values = {k: v for k, v in values.items() if k not in RUN_KEYS}
    variants = [args.variant] if args.variant else [values.pop("variant", "HPAN")]
    values.pop("variant", None)
    if args.variant == "both":
        variants = ["PAN", "HPAN"]
    ok = True
    payload = {}
    for variant in variants:
        cfg = default_config(variant, **values)
        report, groups = check_model(cfg, h=args.h, tol=args.tol)
        ok &= report.passed
        payload[variant] = {"passed": report.passed, "worst": report.worst, "groups": groups,
                            "kink_warnings": report.kink_warnings}
        if not args.json:
            print(f"{variant}: {'PASS' if report.passed else 'FAIL'} "
                  f"(h={args.h:g}, tol={args.tol:g}, worst {report.worst:.3e})")
            for group, err in groups.items():
                print(f"  {group:<14s} {err:.3e}  {'ok' if err <= args.tol else 'FAIL'}")
            for w in report.kink_warnings:
                print(f"  warning: {w}")
    if args.json:
        print(json.dumps({"passed": ok, "tol": args.tol, "h": args.h, "variants": payload}))
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_ingest(args) -> int:
    ds = load_ogb_raw(args.raw_dir)
    save_json_graphs(ds, args.output)
    print(f"wrote {len(ds.graphs)} graphs to {args.output} "
          f"(node dims {ds.node_cardinalities}, edge dims {ds.edge_cardinalities})")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pannet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one or more seeded runs")
    t.add_argument("--config")
    t.add_argument("--dataset", help="JSON file, OGB raw directory, or 'synthetic'")
    t.add_argument("--runs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out-dir", dest="out_dir")
    t.add_argument("--epochs", type=int)
    t.add_argument("--variant", choices=["PAN", "HPAN"])
    t.add_argument("--emb-dim", dest="emb_dim", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--set", action="append", metavar="KEY=VALUE")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="ROC-AUC of a checkpoint on a split")
    e.add_argument("checkpoint")
    e.add_argument("--dataset", required=True)
    e.add_argument("--split", default="test", choices=["train", "valid", "test"])
    e.add_argument("--emb-dim", dest="emb_dim", type=int)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("inspect-met", help="print the MET matrix of one graph")
    m.add_argument("graph_file")
    m.add_argument("--index", type=int, default=0)
    m.add_argument("--cutoff", "-L", type=int, default=2)
    m.add_argument("--temperature", "-T", type=float, default=1.0)
    m.add_argument("--normalization", default="sym")
    m.add_argument("--json", action="store_true")
    m.set_defaults(func=cmd_inspect_met)

    g = sub.add_parser("gradcheck", help="finite-difference check of all parameter groups")
    g.add_argument("--config")
    g.add_argument("--variant", choices=["PAN", "HPAN", "both"])
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--json", action="store_true")
    g.set_defaults(func=cmd_gradcheck)

    i = sub.add_parser("ingest", help="convert an OGB raw CSV directory to JSON")
    i.add_argument("raw_dir")
    i.add_argument("output")
    i.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteValue as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PanError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
