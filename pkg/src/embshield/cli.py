"""Command-line entry point.

Subcommands: gen-data, protect, keygen, run, sweep, bench, report.
Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigError, EmbShieldError


def _load_config(args):
    from .pipeline import PipelineConfig

    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = PipelineConfig.from_json(fh.read())
    else:
        cfg = PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed,
                      synth=replace(cfg.synth, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    return cfg


def _cmd_gen_data(args) -> int:
    from .core import dataset_to_csv
    from .synth import generate_dataset

    cfg = _load_config(args)
    ds = generate_dataset(cfg.synth)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "dataset.csv")
    dataset_to_csv(ds, path)
    print(f"wrote {len(ds)} records (dim {ds.dim}) to {path}")
    return 0


def _cmd_protect(args) -> int:
    from .core import dataset_from_csv, dataset_to_csv
    from .pipeline import PLAINTEXT_STAGES, PipelineConfig, run_pipeline
    from .pipeline import user_pp_params, _apply_pp_matrix
    from .core import mrl_truncate
    from .protect import DPParams, dp_protect_batch, miu_apply, miu_gen_params, nfr_protect
    from .pipeline import _user_seed

    cfg = _load_config(args)
    for stage in cfg.protection_chain:
        if stage not in PLAINTEXT_STAGES:
            raise ConfigError("protect applies plaintext stages only; use 'run' for FHE chains")
    ds = dataset_from_csv(args.data)
    mat = ds.embeddings()
    ids = ds.identity_labels()
    for stage in cfg.protection_chain:
        if stage == "MRL":
            mat = np.stack([mrl_truncate(v, cfg.compression_dim) for v in mat])
        elif stage == "DP":
            mat = dp_protect_batch(mat, DPParams(cfg.dp_epsilon, cfg.dp_sensitivity,
                                                 _user_seed(cfg.seed, 7, 0)))
        elif stage == "PP":
            mat = _apply_pp_matrix(mat, [user_pp_params(cfg, i) for i in ids])
        elif stage == "MIU":
            mat = np.stack([
                miu_apply(mat[k], miu_gen_params(mat.shape[1], cfg.miu_block,
                                                 _user_seed(cfg.miu_seed, 2, ids[k])))
                for k in range(len(mat))
            ])
        elif stage == "NFR":
            mat = np.stack([nfr_protect(v, cfg.nfr_seed).positive for v in mat])
    out_ds = ds.with_embeddings(mat)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "protected.csv")
    dataset_to_csv(out_ds, path)
    print(f"wrote protected dataset ({mat.shape[1]} features) to {path}")
    return 0


def _cmd_keygen(args) -> int:
    from .ckks import params as hep
    from .ckks import scheme as S

    cfg = _load_config(args)
    params = hep.preset(cfg.he_preset)
    keys = S.keygen(params, cfg.seed)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "keyset.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "preset": cfg.he_preset,
                "seed": cfg.seed,
                "params_digest": keys.params_digest.hex(),
                "keyset_digest": keys.digest(),
                "rotation_steps": sorted(keys.rotation_keys),
            },
            fh, indent=2)
    print(f"generated {cfg.he_preset} keys (digest {keys.digest()[:16]}...), summary at {path}")
    return 0


def _cmd_run(args) -> int:
    from .pipeline import run_pipeline

    cfg = _load_config(args)
    if cfg.output_dir is None:
        cfg = replace(cfg, output_dir="out")
    report = run_pipeline(cfg)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(f"outputs in {cfg.output_dir}/", file=sys.stderr)
    return 0


def _cmd_sweep(args) -> int:
    from . import bench as B
    from .plots import plot_sweep

    cfg = _load_config(args)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    which = args.sweep
    if which in ("pp", "all"):
        rows = B.sweep_pp(cfg)
        B.write_sweep_csv(rows, os.path.join(out, "sweep_pp.csv"))
        for param in ("overlap", "m", "C"):
            sel = [r for r in rows if r["param"] == param]
            plot_sweep(sel, param, os.path.join(out, f"sweep_pp_{param}.svg"))
    if which in ("compression", "all"):
        rows = B.sweep_compression(cfg)
        B.write_sweep_csv(rows, os.path.join(out, "sweep_compression.csv"))
        plot_sweep(rows, "compression dim", os.path.join(out, "sweep_compression.svg"))
    if which in ("dp", "all"):
        rows = B.sweep_dp(cfg)
        B.write_sweep_csv(rows, os.path.join(out, "sweep_dp.csv"))
        plot_sweep(rows, "privacy budget", os.path.join(out, "sweep_dp.svg"), logx=True)
    print(f"sweep outputs in {out}/")
    return 0


def _cmd_bench(args) -> int:
    from . import bench as B
    from .pipeline import PipelineConfig
    from .plots import plot_bench

    cfg = _load_config(args)
    base_synth = replace(cfg.synth, dim=512)
    cfg_a = replace(cfg, synth=base_synth, protection_chain=("FHE", "ENC_PP"))
    cfg_b = replace(cfg, synth=base_synth,
                    protection_chain=("MRL", "FHE", "ENC_PP"), compression_dim=64)
    result = B.bench_timings(cfg_a, cfg_b, repetitions=args.repetitions,
                             n_records=args.records)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "bench.json"), "w", encoding="utf-8") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
    plot_bench(result["config_a"]["medians_ms"], result["config_b"]["medians_ms"],
               ("full-size", "compressed"), os.path.join(out, "bench.svg"))
    print(json.dumps({k: result[k] for k in
                      ("total_ms_per_record_a", "total_ms_per_record_b",
                       "speedup_a_over_b")}, indent=2))
    return 0


def _cmd_report(args) -> int:
    """Re-render figures from an existing output directory's CSV/JSON."""
    from .plots import plot_fmr_fnmr, plot_sweep

    src = args.out or "out"
    curve_path = os.path.join(src, "fmr_fnmr.csv")
    made = []
    if os.path.exists(curve_path):
        rows = []
        with open(curve_path, "r", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                rows.append(tuple(float(x) for x in line.strip().split(",")))
        eer = None
        metrics_path = os.path.join(src, "metrics.json")
        title = ""
        if os.path.exists(metrics_path):
            with open(metrics_path, "r", encoding="utf-8") as fh:
                m = json.load(fh)
            eer = m.get("eer")
            title = " + ".join(m.get("protection_chain", [])) or "none"
        plot_fmr_fnmr(rows, os.path.join(src, "curves.svg"), eer=eer, title=title)
        made.append("curves.svg")
    for name in ("sweep_pp", "sweep_compression", "sweep_dp"):
        path = os.path.join(src, name + ".csv")
        if not os.path.exists(path):
            continue
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                p, v, r1, a, g, e = line.strip().split(",")
                rows.append({"param": p, "value": float(v), "rank1": float(r1),
                             "age": float(a), "gender": float(g), "ethnicity": float(e)})
        for param in sorted({r["param"] for r in rows}):
            sel = [r for r in rows if r["param"] == param]
            fname = f"{name}_{param}.svg" if name == "sweep_pp" else f"{name}.svg"
            plot_sweep(sel, param, os.path.join(src, fname),
                       logx=(param == "epsilon"))
            made.append(fname)
    if not made:
        raise ConfigError(f"no report inputs found under {src}/")
    print("rendered: " + ", ".join(made))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="embshield",
                                 description="embedding protection pipeline")
    ap.add_argument("--config", help="pipeline config JSON", default=None)
    ap.add_argument("--seed", type=int, default=None, help="override config seed")
    ap.add_argument("--out", default=None, help="output directory")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate the synthetic dataset CSV")
    p = sub.add_parser("protect", help="apply plaintext chain stages to a dataset CSV")
    p.add_argument("data", help="input dataset CSV")
    sub.add_parser("keygen", help="generate encryption keys and write a summary")
    sub.add_parser("run", help="run the configured protection chain end to end")
    p = sub.add_parser("sweep", help="parameter sweep CSVs and figures")
    p.add_argument("sweep", choices=("pp", "compression", "dp", "all"))
    p = sub.add_parser("bench", help="timing comparison: full-size vs compressed encrypted path")
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--records", type=int, default=64)
    sub.add_parser("report", help="re-render figures from an output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": _cmd_gen_data,
        "protect": _cmd_protect,
        "keygen": _cmd_keygen,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "bench": _cmd_bench,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EmbShieldError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
