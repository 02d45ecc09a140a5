"""End-to-end protection pipeline: data, chains, matching, leakage, reports.

A protection chain is an ordered subset of {MRL, DP, PP, MIU, NFR, FHE,
ENC_PP}. Plaintext stages transform record embeddings; FHE switches to the
encrypted path where matching runs over ciphertext slots and the leakage
attack sees serialized ciphertext bytes.

Identification protocol: one enrollment template per identity (the mean of
its training records after shared compression), protected through the same
chain as the probes. Scores are cosine similarities (plaintext or decrypted
encrypted-domain approximations), except the template-pair scheme which uses
its own positive-vs-negative comparator.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import encops
from .ckks import params as hep
from .ckks import scheme as S
from .ckks.serial import serialize_ciphertext
from .core import ATTRIBUTES, Dataset, MatchScore, l2_normalize, mrl_truncate
from .errors import DomainViolationError, InvalidChainError, InvalidConfigError
from .evalharness import (
    MetricsReport,
    TrainConfig,
    chance_level,
    ciphertext_byte_features,
    evaluate_attribute_leakage,
    fmr_fnmr_curve,
)
from .protect import (
    DPParams,
    PPParams,
    dp_protect_batch,
    miu_apply,
    miu_gen_params,
    nfr_compare,
    nfr_protect,
    polyprotect_apply,
    polyprotect_gen_params,
)
from .synth import SynthConfig, generate_dataset, split_dataset

STAGES = ("MRL", "DP", "PP", "MIU", "NFR", "FHE", "ENC_PP")
PLAINTEXT_STAGES = ("MRL", "DP", "PP", "MIU", "NFR")


def validate_chain(chain) -> tuple[str, ...]:
    chain = tuple(chain)
    for stage in chain:
        if stage not in STAGES:
            raise InvalidChainError(f"unknown stage {stage!r}")
    if len(set(chain)) != len(chain):
        raise InvalidChainError("duplicate stages in chain")
    if "ENC_PP" in chain:
        if "FHE" not in chain or chain.index("FHE") > chain.index("ENC_PP"):
            raise InvalidChainError("ENC_PP requires FHE earlier in the chain")
    if "FHE" in chain:
        fhe_at = chain.index("FHE")
        for stage in chain[fhe_at + 1:]:
            if stage in PLAINTEXT_STAGES:
                raise InvalidChainError(f"plaintext stage {stage} cannot follow FHE")
        if "NFR" in chain:
            raise InvalidChainError("the template-pair scheme is evaluated standalone, not under FHE")
    if "NFR" in chain and chain.index("NFR") != len(chain) - 1:
        raise InvalidChainError("NFR must be the final stage of its chain")
    if "PP" in chain and "ENC_PP" in chain:
        raise InvalidChainError("choose plaintext PP or encrypted ENC_PP, not both")
    return chain


@dataclass
class PipelineConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    protection_chain: tuple = ()
    compression_dim: int = 64
    pp_m: int = 5
    pp_C: int = 50
    pp_overlap: int = 0
    pp_seed: int = 101
    dp_epsilon: float = 0.1
    dp_sensitivity: float = 2.0
    miu_block: int = 16
    miu_seed: int = 202
    nfr_seed: int = 303
    he_preset: str = "desk"
    fit_degree: int = 8
    fit_interval: tuple = (0.35, 2.5)
    train_fraction: float = 0.5
    fhe_probe_limit: int = 128
    fhe_leakage_samples: int = 400
    byte_feature_raw: int = 64
    classifier_epochs: int = 200
    output_dir: str | None = None
    render_figures: bool = True
    data_csv: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        self.protection_chain = validate_chain(self.protection_chain)
        if not 1 <= self.compression_dim:
            raise InvalidConfigError("compression_dim must be >= 1")
        if self.he_preset not in hep.PRESETS:
            raise InvalidConfigError(f"unknown preset {self.he_preset!r}")

    def to_json(self) -> str:
        d = asdict(self)
        d["synth"] = asdict(self.synth)
        d["protection_chain"] = list(self.protection_chain)
        d["fit_interval"] = list(self.fit_interval)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        d = json.loads(text)
        if "synth" in d:
            d["synth"] = SynthConfig(**d["synth"])
        if "protection_chain" in d:
            d["protection_chain"] = tuple(d["protection_chain"])
        if "fit_interval" in d:
            d["fit_interval"] = tuple(d["fit_interval"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from None


def next_pow2(n: int) -> int:
    return 1 << max(0, (int(n) - 1)).bit_length() if n > 1 else 1


def pack_rows(mat: np.ndarray, block: int, slots: int) -> list[np.ndarray]:
    """Lay out rows in consecutive block-aligned groups, zero-padded."""
    capacity = slots // block
    out = []
    for start in range(0, mat.shape[0], capacity):
        chunk = mat[start:start + capacity]
        arr = np.zeros(slots)
        for i, row in enumerate(chunk):
            arr[i * block: i * block + row.shape[0]] = row
        out.append(arr)
    return out


def replicate_row(row: np.ndarray, block: int, slots: int) -> np.ndarray:
    arr = np.zeros(slots)
    for b in range(slots // block):
        arr[b * block: b * block + row.shape[0]] = row
    return arr


def _user_seed(base: int, tag: int, ident: int) -> int:
    return int(np.random.SeedSequence([base, tag, int(ident)]).generate_state(1)[0])


def user_pp_params(cfg: PipelineConfig, ident: int) -> PPParams:
    return polyprotect_gen_params(cfg.pp_m, cfg.pp_C, cfg.pp_overlap,
                                  _user_seed(cfg.pp_seed, 1, ident))


class _Timer:
    def __init__(self):
        self.ms: dict[str, float] = {}

    def add(self, stage: str, seconds: float) -> None:
        self.ms[stage] = self.ms.get(stage, 0.0) + seconds * 1000.0


class EncryptedMatcher:
    """Encrypted gallery matching with block-packed slots.

    Gallery templates are enrolled one ciphertext each (replicated across
    blocks) so a packed probe batch scores against every template with one
    slotwise multiply + fold.
    """

    def __init__(self, cfg: PipelineConfig, dim: int, keys, rng, enc_pp: bool):
        self.cfg = cfg
        self.params = keys.params
        self.keys = keys
        self.rng = rng
        self.dim = dim
        self.block = next_pow2(dim)
        self.slots = self.params.slot_count
        if self.block > self.slots:
            raise InvalidConfigError(f"dim {dim} does not fit {self.slots} slots")
        self.capacity = self.slots // self.block
        self.enc_pp = enc_pp
        self.approx = encops.fit_invsqrt_poly(cfg.fit_degree, cfg.fit_interval)
        if enc_pp:
            proto = polyprotect_gen_params(cfg.pp_m, cfg.pp_C, cfg.pp_overlap, 0)
            self.positions = (proto.stride, proto.output_dim(dim))
        else:
            self.positions = None

    def encrypt_slots(self, arr: np.ndarray):
        pt = S.encode(arr, None, self.params)
        return S.encrypt(pt, self.keys, self.rng)

    def protect_ct(self, ct, pp_params, post_scale=1.0):
        if not self.enc_pp:
            return ct
        return encops.enc_polyprotect(ct, pp_params, self.keys, dim=self.dim,
                                      block=self.block, post_scale=post_scale)

    def _norm_poly(self, ct):
        prod = encops.mult_rescale(ct, ct, self.keys)
        if self.positions is None:
            folded = encops.fold_contiguous(prod, self.block, self.keys)
        else:
            folded = encops.fold_strided(prod, *self.positions, self.keys)
        return encops.enc_poly_eval(folded, self.approx, self.keys)

    def prepare_gallery(self, gallery: np.ndarray, pp_params_per_id,
                        post_scales=None) -> None:
        self.gallery_cts = []
        for j, row in enumerate(gallery):
            ct = self.encrypt_slots(replicate_row(row, self.block, self.slots))
            ct = self.protect_ct(ct, pp_params_per_id[j] if pp_params_per_id else None,
                                 post_scales[j] if post_scales is not None else 1.0)
            self.gallery_cts.append((ct, self._norm_poly(ct)))

    def match_batch(self, probe_rows: np.ndarray, probe_pp_params,
                    probe_post_scales=None) -> np.ndarray:
        """Scores (n_probes_in_batch, n_gallery) from one packed batch."""
        packed = pack_rows(probe_rows, self.block, self.slots)
        if len(packed) != 1:
            raise InvalidConfigError("batch exceeds ciphertext capacity")
        pct = self.encrypt_slots(packed[0])
        scales = 1.0
        if probe_post_scales is not None:
            scales = np.ones(self.capacity)
            scales[: len(probe_post_scales)] = probe_post_scales
        pct = self.protect_ct(pct, probe_pp_params, scales)
        pn = self._norm_poly(pct)
        n = probe_rows.shape[0]
        scores = np.empty((n, len(self.gallery_cts)))
        for j, (gct, png) in enumerate(self.gallery_cts):
            prod = encops.mult_rescale(pct, gct, self.keys)
            if self.positions is None:
                ip = encops.fold_contiguous(prod, self.block, self.keys)
            else:
                ip = encops.fold_strided(prod, *self.positions, self.keys)
            sc = encops.mult_rescale(ip, pn, self.keys)
            sc = encops.mult_rescale(sc, png, self.keys)
            vals = S.decode(S.decrypt(sc, self.keys))
            scores[:, j] = vals[np.arange(n) * self.block]
        return scores


def _apply_pp_matrix(mat: np.ndarray, params_per_row) -> np.ndarray:
    out = None
    for i in range(mat.shape[0]):
        t = polyprotect_apply(mat[i], params_per_row[i])
        if out is None:
            out = np.empty((mat.shape[0], t.shape[0]))
        out[i] = t
    return out


def _rank1_from_scores(scores: np.ndarray, gallery_ids: np.ndarray,
                       probe_ids: np.ndarray) -> float:
    pred = gallery_ids[np.argmax(scores, axis=1)]
    return float(np.mean(pred == probe_ids))


def _match_scores_list(scores: np.ndarray, gallery_ids: np.ndarray,
                       probe_ids: np.ndarray) -> list[MatchScore]:
    out = []
    for i in range(scores.shape[0]):
        for j in range(scores.shape[1]):
            kind = "genuine" if probe_ids[i] == gallery_ids[j] else "impostor"
            out.append(MatchScore(float(scores[i, j]), kind))
    return out


def run_pipeline(cfg: PipelineConfig) -> MetricsReport:
    """Run one protection chain end to end and assemble the metrics report.

    Writes metrics.json, fmr_fnmr.csv, manifest.json (and figures) into
    cfg.output_dir when set.
    """
    timer = _Timer()
    chain = cfg.protection_chain
    rng = np.random.default_rng(np.random.PCG64([cfg.seed, 0xE5]))

    t = time.perf_counter()
    if cfg.data_csv:
        from .core import dataset_from_csv

        ds = dataset_from_csv(cfg.data_csv)
    else:
        ds = generate_dataset(cfg.synth)
    timer.add("data", time.perf_counter() - t)

    t = time.perf_counter()
    train, test = split_dataset(ds, cfg.train_fraction, cfg.seed)
    timer.add("split", time.perf_counter() - t)

    train_ids = train.identity_labels()
    test_ids = test.identity_labels()
    gallery_ids = np.unique(train_ids)

    # --- baseline (unprotected) metrics ---
    t = time.perf_counter()
    tr_raw = train.embeddings()
    te_raw = test.embeddings()
    gal_raw = np.stack(
        [l2_normalize(tr_raw[train_ids == u].mean(axis=0)) for u in gallery_ids]
    )
    clf_cfg = TrainConfig(epochs=cfg.classifier_epochs, seed=cfg.seed)
    base_acc, base_auc, chance = {}, {}, {}
    for attr in ATTRIBUTES:
        acc, auc = evaluate_attribute_leakage(
            tr_raw, train.labels(attr), te_raw, test.labels(attr), clf_cfg)
        base_acc[attr], base_auc[attr] = acc, auc
        chance[attr] = chance_level(test.labels(attr))
    timer.add("baseline_leakage", time.perf_counter() - t)

    # probe subset: full test set on plaintext chains, capped on FHE chains
    if "FHE" in chain:
        n_probe = min(cfg.fhe_probe_limit, len(test))
        probe_idx = np.linspace(0, len(test) - 1, n_probe).astype(int)
    else:
        probe_idx = np.arange(len(test))

    t = time.perf_counter()
    base_scores = (te_raw[probe_idx] / np.linalg.norm(te_raw[probe_idx], axis=1,
                                                      keepdims=True)) @ gal_raw.T
    baseline_rank1 = _rank1_from_scores(base_scores, gallery_ids, test_ids[probe_idx])
    timer.add("baseline_rank1", time.perf_counter() - t)

    # --- plaintext chain stages ---
    t = time.perf_counter()
    tr, te, gal = tr_raw, te_raw, gal_raw
    gallery_pp = None
    nfr_mode = False
    for stage in chain:
        if stage == "MRL":
            d = cfg.compression_dim
            tr = np.stack([mrl_truncate(v, d) for v in tr])
            te = np.stack([mrl_truncate(v, d) for v in te])
            gal = np.stack([mrl_truncate(v, d) for v in gal])
        elif stage == "DP":
            # query perturbation: submitted records are noised, enrollment
            # templates derive from the owner's clean samples
            dp = DPParams(cfg.dp_epsilon, cfg.dp_sensitivity, _user_seed(cfg.seed, 7, 0))
            tr = dp_protect_batch(tr, dp)
            te = dp_protect_batch(te, replace(dp, seed=_user_seed(cfg.seed, 7, 1)))
        elif stage == "PP":
            tr = _apply_pp_matrix(tr, [user_pp_params(cfg, i) for i in train_ids])
            te = _apply_pp_matrix(te, [user_pp_params(cfg, i) for i in test_ids])
            gal = _apply_pp_matrix(gal, [user_pp_params(cfg, i) for i in gallery_ids])
        elif stage == "MIU":
            def perm(ident):
                return miu_gen_params(tr.shape[1], cfg.miu_block,
                                      _user_seed(cfg.miu_seed, 2, ident))
            tr = np.stack([miu_apply(tr[i], perm(train_ids[i])) for i in range(len(tr))])
            te = np.stack([miu_apply(te[i], perm(test_ids[i])) for i in range(len(te))])
            gal = np.stack([miu_apply(gal[j], perm(gallery_ids[j])) for j in range(len(gal))])
        elif stage == "NFR":
            nfr_mode = True
            tr = np.stack([nfr_protect(v, cfg.nfr_seed).positive for v in tr])
            te = np.stack([nfr_protect(v, cfg.nfr_seed).positive for v in te])
            gal = np.stack([nfr_protect(v, cfg.nfr_seed).negative for v in gal])
        elif stage == "FHE":
            break
    timer.add("plaintext_protect", time.perf_counter() - t)

    eer = None
    if "FHE" not in chain:
        # leakage on the protected record matrices
        t = time.perf_counter()
        attr_acc, attr_auc = {}, {}
        for attr in ATTRIBUTES:
            acc, auc = evaluate_attribute_leakage(
                tr, train.labels(attr), te, test.labels(attr), clf_cfg)
            attr_acc[attr], attr_auc[attr] = acc, auc
        timer.add("leakage", time.perf_counter() - t)

        t = time.perf_counter()
        if nfr_mode:
            scores = np.empty((len(probe_idx), len(gallery_ids)))
            for r, i in enumerate(probe_idx):
                scores[r] = [nfr_compare(te[i], g) for g in gal]
        else:
            pn = te[probe_idx] / np.linalg.norm(te[probe_idx], axis=1, keepdims=True)
            gn = gal / np.linalg.norm(gal, axis=1, keepdims=True)
            scores = pn @ gn.T
        timer.add("matching", time.perf_counter() - t)
    else:
        attr_acc, attr_auc, scores, enc_timings = _run_encrypted(
            cfg, chain, tr, te, gal, train, test, train_ids, test_ids,
            gallery_ids, probe_idx, clf_cfg, rng)
        for k, v in enc_timings.items():
            timer.ms[k] = v

    rank1 = _rank1_from_scores(scores, gallery_ids, test_ids[probe_idx])
    pg = {a: base_acc[a] - attr_acc[a] for a in ATTRIBUTES}
    sr = {a: (base_acc[a] - attr_acc[a]) / base_acc[a] for a in ATTRIBUTES}

    score_list = _match_scores_list(scores, gallery_ids, test_ids[probe_idx])
    curve_rows, eer, _area = fmr_fnmr_curve(score_list)

    report = MetricsReport(
        rank1_accuracy=rank1,
        attribute_accuracy=attr_acc,
        attribute_auc=attr_auc,
        privacy_gain=pg,
        suppression_rate=sr,
        timings_ms={k: round(v, 3) for k, v in timer.ms.items()},
        baseline_rank1=baseline_rank1,
        baseline_accuracy=base_acc,
        baseline_auc=base_auc,
        chance=chance,
        eer=eer,
        protection_chain=chain,
    )
    if cfg.output_dir:
        _write_outputs(cfg, report, curve_rows)
    return report


def _run_encrypted(cfg, chain, tr, te, gal, train, test, train_ids, test_ids,
                   gallery_ids, probe_idx, clf_cfg, rng):
    """Encrypted-path matching and ciphertext-byte leakage."""
    timings: dict[str, float] = {}
    params = hep.preset(cfg.he_preset)
    t = time.perf_counter()
    keys = S.keygen(params, _user_seed(cfg.seed, 11, 0))
    timings["keygen"] = (time.perf_counter() - t) * 1000

    enc_pp = "ENC_PP" in chain
    dim = tr.shape[1]

    gal_pp = [user_pp_params(cfg, i) for i in gallery_ids] if enc_pp else None
    gal_scales = None
    user_scale: dict[int, float] = {}
    if enc_pp:
        # per-user public calibration: at enrollment the owner publishes the
        # norm of its own protected template, placing every user's squared
        # norms near 1 inside the fitted interval
        plain_gal = _apply_pp_matrix(gal, gal_pp)
        norms = np.linalg.norm(plain_gal, axis=1)
        if np.any(norms == 0):
            raise DomainViolationError("degenerate protected enrollment template")
        gal_scales = 1.0 / norms
        user_scale = {int(u): float(s) for u, s in zip(gallery_ids, gal_scales)}

    matcher = EncryptedMatcher(cfg, dim, keys, rng, enc_pp)

    t = time.perf_counter()
    matcher.prepare_gallery(gal, gal_pp, gal_scales)
    timings["enroll_gallery"] = (time.perf_counter() - t) * 1000

    # identification over packed probe batches
    t = time.perf_counter()
    scores = np.empty((len(probe_idx), len(gallery_ids)))
    cap = matcher.capacity
    for start in range(0, len(probe_idx), cap):
        chunk = probe_idx[start:start + cap]
        rows = te[chunk]
        pp_list = None
        scale_list = None
        if enc_pp:
            pp_list = [user_pp_params(cfg, i) for i in test_ids[chunk]]
            scale_list = [user_scale.get(int(i), 1.0) for i in test_ids[chunk]]
        scores[start:start + len(chunk)] = matcher.match_batch(rows, pp_list, scale_list)
    timings["encrypted_matching"] = (time.perf_counter() - t) * 1000

    # ciphertext-byte leakage attack on per-record stored templates
    t = time.perf_counter()
    n_samples = min(cfg.fhe_leakage_samples, len(tr) + len(te))
    n_tr = min(len(tr), n_samples // 2)
    n_te = min(len(te), n_samples - n_tr)
    tr_idx = np.linspace(0, len(tr) - 1, n_tr).astype(int)
    te_idx = np.linspace(0, len(te) - 1, n_te).astype(int)

    def record_features(mat, ids, indices):
        feats = []
        for i in indices:
            arr = np.zeros(matcher.slots)
            arr[: mat[i].shape[0]] = mat[i]
            ct = matcher.encrypt_slots(arr)
            if enc_pp:
                ct = matcher.protect_ct(ct, user_pp_params(cfg, ids[i]),
                                        user_scale.get(int(ids[i]), 1.0))
            feats.append(
                ciphertext_byte_features(serialize_ciphertext(ct), cfg.byte_feature_raw)
            )
        return np.stack(feats)

    feat_tr = record_features(tr, train_ids, tr_idx)
    feat_te = record_features(te, test_ids, te_idx)
    attr_acc, attr_auc = {}, {}
    for attr in ATTRIBUTES:
        acc, auc = evaluate_attribute_leakage(
            feat_tr, train.labels(attr)[tr_idx], feat_te, test.labels(attr)[te_idx],
            clf_cfg)
        attr_acc[attr], attr_auc[attr] = acc, auc
    timings["byte_attack"] = (time.perf_counter() - t) * 1000
    return attr_acc, attr_auc, scores, timings


def _write_outputs(cfg: PipelineConfig, report: MetricsReport, curve_rows) -> None:
    import os

    os.makedirs(cfg.output_dir, exist_ok=True)
    out = cfg.output_dir
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    with open(os.path.join(out, "fmr_fnmr.csv"), "w", encoding="utf-8") as fh:
        fh.write("threshold,fmr,fnmr\n")
        for t, a, b in curve_rows:
            fh.write(f"{t:.9g},{a:.9g},{b:.9g}\n")
    manifest = {
        "config": json.loads(cfg.to_json()),
        "seed": cfg.seed,
        "version": _pkg_version(),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    if cfg.render_figures:
        from .plots import plot_fmr_fnmr

        plot_fmr_fnmr(curve_rows, os.path.join(out, "curves.svg"),
                      eer=report.eer, title=" + ".join(report.protection_chain) or "none")


def _pkg_version() -> str:
    from . import __version__

    return __version__
