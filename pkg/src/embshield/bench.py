"""Wall-clock benchmarks of the encrypted path and parameter sweeps.

Timings are medians over repetitions after one discarded warmup run, and
are reported per record: SIMD packing means one ciphertext op covers many
records, so throughput is the honest unit for comparing embedding sizes.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace
from statistics import median

import numpy as np

from . import encops
from .ckks import params as hep
from .ckks import scheme as S
from .core import mrl_truncate
from .errors import ConfigError
from .evalharness import TrainConfig, evaluate_attribute_leakage
from .pipeline import (
    EncryptedMatcher,
    PipelineConfig,
    _apply_pp_matrix,
    _rank1_from_scores,
    next_pow2,
    pack_rows,
    user_pp_params,
)
from .protect import DPParams, dp_protect_batch, polyprotect_gen_params
from .synth import generate_dataset, split_dataset

BENCH_STAGES = ("encrypt", "enc_pp", "enc_cosine_per_pair", "decrypt")


def _bench_vectors(cfg: PipelineConfig, n_records: int) -> np.ndarray:
    ds = generate_dataset(replace(cfg.synth, n_identities=max(8, n_records // 4),
                                  records_per_identity=4))
    mat = ds.embeddings()[:n_records]
    if "MRL" in cfg.protection_chain:
        mat = np.stack([mrl_truncate(v, cfg.compression_dim) for v in mat])
    return mat


def _bench_one(cfg: PipelineConfig, repetitions: int, n_records: int,
               rng) -> dict:
    """Per-record stage timings for one configuration."""
    params = hep.preset(cfg.he_preset)
    keys = S.keygen(params, cfg.seed + 17)
    mat = _bench_vectors(cfg, n_records)
    dim = mat.shape[1]
    block = next_pow2(dim)
    slots = params.slot_count
    enc_pp = "ENC_PP" in cfg.protection_chain
    pp = polyprotect_gen_params(cfg.pp_m, cfg.pp_C, cfg.pp_overlap, cfg.pp_seed)
    post_scale = 1.0
    if enc_pp:
        plain = _apply_pp_matrix(mat, [pp] * len(mat))
        post_scale = 1.0 / np.sqrt(float(np.mean(np.sum(plain ** 2, axis=1))))
    approx = encops.fit_invsqrt_poly(cfg.fit_degree, cfg.fit_interval)
    positions = (pp.stride, pp.output_dim(dim)) if enc_pp else None
    capacity = slots // block

    samples: dict[str, list[float]] = {s: [] for s in BENCH_STAGES}
    for rep in range(repetitions + 1):  # first rep is warmup
        packed = pack_rows(mat, block, slots)

        t = time.perf_counter()
        cts = [S.encrypt(S.encode(arr, None, params), keys, rng) for arr in packed]
        t_encrypt = time.perf_counter() - t

        t = time.perf_counter()
        if enc_pp:
            cts = [
                encops.enc_polyprotect(ct, pp, keys, dim=dim, block=block,
                                       post_scale=post_scale)
                for ct in cts
            ]
        t_pp = time.perf_counter() - t

        t = time.perf_counter()
        cos = encops.enc_cosine(cts[0], cts[0], block, approx, keys,
                                positions=positions)
        t_cos = time.perf_counter() - t

        t = time.perf_counter()
        for ct in cts:
            S.decode(S.decrypt(ct, keys))
        S.decode(S.decrypt(cos, keys))
        t_dec = time.perf_counter() - t

        if rep == 0:
            continue
        samples["encrypt"].append(t_encrypt / n_records * 1000)
        samples["enc_pp"].append(t_pp / n_records * 1000)
        samples["enc_cosine_per_pair"].append(t_cos / min(capacity, n_records) * 1000)
        samples["decrypt"].append(t_dec / n_records * 1000)
    return {
        "samples_ms": samples,
        "medians_ms": {s: median(v) for s, v in samples.items()},
        "n_records": n_records,
        "records_per_ciphertext": capacity,
        "dim": dim,
    }


def bench_timings(cfg_a: PipelineConfig, cfg_b: PipelineConfig,
                  repetitions: int = 3, n_records: int = 64) -> dict:
    """Benchmark two configurations and report the speedup ratio A/B."""
    if cfg_a.he_preset != cfg_b.he_preset:
        raise ConfigError("both configs must share the HE preset")
    rng = np.random.default_rng(np.random.PCG64(991))
    rep_a = _bench_one(cfg_a, repetitions, n_records, rng)
    rep_b = _bench_one(cfg_b, repetitions, n_records, rng)
    total_a = sum(rep_a["medians_ms"].values())
    total_b = sum(rep_b["medians_ms"].values())
    return {
        "config_a": rep_a,
        "config_b": rep_b,
        "total_ms_per_record_a": total_a,
        "total_ms_per_record_b": total_b,
        "speedup_a_over_b": total_a / total_b,
        "repetitions": repetitions,
    }


# --- parameter sweeps (plaintext figure analogs) ---

def _eval_point(train, test, tr, te, gal, gallery_ids, clf_cfg):
    from .evalharness import ATTRIBUTES

    row = {}
    pn = te / np.linalg.norm(te, axis=1, keepdims=True)
    gn = gal / np.linalg.norm(gal, axis=1, keepdims=True)
    scores = pn @ gn.T
    row["rank1"] = _rank1_from_scores(scores, gallery_ids, test.identity_labels())
    for attr in ATTRIBUTES:
        acc, _ = evaluate_attribute_leakage(tr, train.labels(attr),
                                            te, test.labels(attr), clf_cfg)
        row[attr] = acc
    return row


def _sweep_base(cfg: PipelineConfig):
    ds = generate_dataset(cfg.synth)
    train, test = split_dataset(ds, cfg.train_fraction, cfg.seed)
    from .core import l2_normalize

    ids = train.identity_labels()
    gallery_ids = np.unique(ids)
    tr = train.embeddings()
    gal = np.stack([l2_normalize(tr[ids == u].mean(axis=0)) for u in gallery_ids])
    return ds, train, test, gal, gallery_ids


def sweep_pp(cfg: PipelineConfig, overlaps=(0, 1, 2, 3), ms=(4, 5, 6, 7, 8),
             cs=(10, 20, 45, 60)) -> list[dict]:
    """One-at-a-time grids over the polynomial-hash parameters."""
    ds, train, test, gal, gallery_ids = _sweep_base(cfg)
    clf_cfg = TrainConfig(epochs=cfg.classifier_epochs, seed=cfg.seed)
    tr0, te0 = train.embeddings(), test.embeddings()
    rows = []

    def run(param, value, m, C, overlap):
        sub = replace(cfg, pp_m=m, pp_C=C, pp_overlap=overlap)
        tr = _apply_pp_matrix(tr0, [user_pp_params(sub, i) for i in train.identity_labels()])
        te = _apply_pp_matrix(te0, [user_pp_params(sub, i) for i in test.identity_labels()])
        g = _apply_pp_matrix(gal, [user_pp_params(sub, i) for i in gallery_ids])
        row = {"param": param, "value": value}
        row.update(_eval_point(train, test, tr, te, g, gallery_ids, clf_cfg))
        rows.append(row)

    for ov in overlaps:
        run("overlap", ov, cfg.pp_m, cfg.pp_C, ov)
    for m in ms:
        run("m", m, m, cfg.pp_C, min(cfg.pp_overlap, m - 1))
    for C in cs:
        run("C", C, cfg.pp_m, C, cfg.pp_overlap)
    return rows


def sweep_compression(cfg: PipelineConfig, dims=(8, 16, 32, 64, 128, 256)) -> list[dict]:
    ds, train, test, gal, gallery_ids = _sweep_base(cfg)
    clf_cfg = TrainConfig(epochs=cfg.classifier_epochs, seed=cfg.seed)
    tr0, te0 = train.embeddings(), test.embeddings()
    rows = []
    for d in dims:
        tr = np.stack([mrl_truncate(v, d) for v in tr0])
        te = np.stack([mrl_truncate(v, d) for v in te0])
        g = np.stack([mrl_truncate(v, d) for v in gal])
        row = {"param": "compression_dim", "value": d}
        row.update(_eval_point(train, test, tr, te, g, gallery_ids, clf_cfg))
        rows.append(row)
    return rows


def sweep_dp(cfg: PipelineConfig,
             epsilons=(0.001, 0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0)
             ) -> list[dict]:
    ds, train, test, gal, gallery_ids = _sweep_base(cfg)
    clf_cfg = TrainConfig(epochs=cfg.classifier_epochs, seed=cfg.seed)
    tr0, te0 = train.embeddings(), test.embeddings()
    rows = []
    for eps in epsilons:
        tr = dp_protect_batch(tr0, DPParams(eps, cfg.dp_sensitivity, cfg.seed + 31))
        te = dp_protect_batch(te0, DPParams(eps, cfg.dp_sensitivity, cfg.seed + 32))
        row = {"param": "epsilon", "value": eps}
        row.update(_eval_point(train, test, tr, te, gal, gallery_ids, clf_cfg))
        rows.append(row)
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("param,value,rank1,age,gender,ethnicity\n")
        for r in rows:
            fh.write(f"{r['param']},{r['value']:.9g},{r['rank1']:.9g},"
                     f"{r['age']:.9g},{r['gender']:.9g},{r['ethnicity']:.9g}\n")
