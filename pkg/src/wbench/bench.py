"""Desk-scale robustness benchmark and frequency-retention analysis.

``run_benchmark`` sweeps methods x attacks over a corpus. Every image is
watermarked through resolution scaling at the bench resolution, stored on the
8-bit lattice, attacked, and decoded; the unwatermarked image goes through the
same attack and decoder to form the null set. Detection thresholds come from
the exact binomial test in :mod:`wbench.stats`.

``frequency_analysis`` inserts a constant ring into the spectrum of every
corpus image, attacks original and marked copies alike and measures how much
of the ring's band energy survives.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.stats import rankdata

from . import __version__
from .attacks import IDENTITY, LADDER_VERSION, AttackSpec, apply_attack
from .corpus import corpus_hash
from .imagecore import RGB, ImageBuf, psnr, resize_array, ssim, to_lattice
from .spectral import (
    HIGH, LOW, MID, BandSpec, band_energy, fft2_array, ifft2_real, log_magnitude, radial_grid,
    ring_pattern,
)
from .stats import tau_for_target_fpr
from .watermark import (
    CAPACITY, BitMessage, canonical_method, default_key, scaled_embed, scaled_extract,
)

REPORT_SCHEMA = "wbench.report/1"
SPECTRAL_SCHEMA = "wbench.spectral/1"
CSV_SCHEMA = "1"
DEFAULT_TARGETS = (1e-3, 1e-2)
DEFAULT_AMPLITUDE = 10.0
BENCH_RESOLUTION = 512

# bands holding less than this share of the inserted pattern's energy are
# reported relative to the whole pattern instead of their own (near-zero) share
_LEAK_SHARE = 1e-3


class BenchError(ValueError):
    pass


def _fmt_fpr(f: float) -> str:
    return repr(float(f))


@dataclass(frozen=True)
class BenchRecord:
    method: str
    attack: str
    attack_params: dict
    n_images: int
    bit_accuracy_mean: float
    tpr_at_fpr: dict
    auroc: float
    psnr_mean: float
    ssim_mean: float
    corpus_hash: str
    tau: dict = field(default_factory=dict)
    fpr_empirical: dict = field(default_factory=dict)
    null_match_rate: float = 0.5
    p_o: float = 0.5

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "attack": self.attack,
            "attack_params": dict(self.attack_params),
            "n_images": self.n_images,
            "bit_accuracy_mean": self.bit_accuracy_mean,
            "tpr_at_fpr": dict(self.tpr_at_fpr),
            "auroc": self.auroc,
            "psnr_mean": self.psnr_mean,
            "ssim_mean": self.ssim_mean,
            "corpus_hash": self.corpus_hash,
            "tau": dict(self.tau),
            "fpr_empirical": dict(self.fpr_empirical),
            "null_match_rate": self.null_match_rate,
            "p_o": self.p_o,
        }

    @classmethod
    def from_dict(cls, d: dict) -> BenchRecord:
        return cls(**d)


@dataclass(frozen=True)
class SpectralReport:
    band: BandSpec
    attack: AttackSpec
    retention_low: float
    retention_mid: float
    retention_high: float
    mean_diff_map: np.ndarray
    n_images: int = 0
    amplitude: float = DEFAULT_AMPLITUDE
    channels: str = "rgb-mean"

    @property
    def retention(self) -> float:
        """Retention in the band the ring was inserted into."""
        return {LOW: self.retention_low, MID: self.retention_mid,
                HIGH: self.retention_high}.get(self.band.band, math.nan)

    def to_dict(self) -> dict:
        return {
            "schema": SPECTRAL_SCHEMA,
            "band": {"band": self.band.band, "r_low": self.band.r_low, "r_high": self.band.r_high},
            "attack": {"kind": self.attack.kind, "severity": self.attack.severity,
                       "seed": self.attack.seed, "params": self.attack.resolved_params()},
            "amplitude": self.amplitude,
            "n_images": self.n_images,
            "channels": self.channels,
            "normalization": "per-image diff maps scaled to unit pre-attack band energy",
            "retention_low": self.retention_low,
            "retention_mid": self.retention_mid,
            "retention_high": self.retention_high,
            "map_shape": list(self.mean_diff_map.shape),
            "radial_profile": radial_profile(self.mean_diff_map).tolist(),
        }


# ---------------------------------------------------------------------------
# frequency analysis

def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def radial_profile(mag: np.ndarray, n_bins: int = 32) -> np.ndarray:
    """Mean magnitude in equal-width radial rings (Nyquist radius = 1)."""
    h, w = mag.shape[:2]
    r = radial_grid(w, h)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.digitize(r, edges) - 1, 0, n_bins - 1)
    m2 = mag if mag.ndim == 2 else mag.mean(axis=2)
    sums = np.bincount(idx.ravel(), weights=m2.ravel(), minlength=n_bins)
    counts = np.bincount(idx.ravel(), minlength=n_bins)
    return sums / np.maximum(counts, 1)


def insert_ring(img: ImageBuf, band: BandSpec, amplitude: float) -> ImageBuf:
    """Add the constant ring to the spectrum of every RGB channel."""
    pattern = ring_pattern(img.width, img.height, band.r_low, band.r_high, amplitude)
    spec = fft2_array(img.data) + pattern[..., None]
    return img.with_data(np.clip(ifft2_real(spec, tol=1e-9), 0.0, 1.0))


def _diff_mag(a: np.ndarray, b: np.ndarray, luminance: bool) -> np.ndarray:
    d = a - b
    if luminance:
        d = (0.299 * d[..., 0] + 0.587 * d[..., 1] + 0.114 * d[..., 2])[..., None]
    return np.abs(fft2_array(d)).mean(axis=2)


def frequency_analysis(corpus, band: BandSpec, attack: AttackSpec,
                       amplitude: float = DEFAULT_AMPLITUDE,
                       luminance: bool = False) -> SpectralReport:
    n = len(corpus)
    if n == 0:
        raise BenchError("empty corpus")
    shape = None
    pre_sum = post_sum = None
    for i in range(n):
        img = corpus[i]
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise BenchError(f"mixed image sizes: {shape} vs {img.shape}")
        marked = insert_ring(img, band, amplitude)
        pre = _diff_mag(marked.data, img.data, luminance)
        post = _diff_mag(apply_attack(marked, attack).data, apply_attack(img, attack).data,
                         luminance)
        scale = math.sqrt(band_energy(pre, band)) or 1.0
        pre, post = pre / scale, post / scale
        pre_sum = pre if pre_sum is None else pre_sum + pre
        post_sum = post if post_sum is None else post_sum + post
    pre_mean, post_mean = pre_sum / n, post_sum / n

    bands = {b: BandSpec.named(b) for b in (LOW, MID, HIGH)}
    pre_e = {b: band_energy(pre_mean, spec) for b, spec in bands.items()}
    total_pre = sum(pre_e.values())
    ret = {}
    for b, spec in bands.items():
        post_e = band_energy(post_mean, spec)
        if pre_e[b] > _LEAK_SHARE * total_pre:
            ret[b] = post_e / pre_e[b]
        else:
            ret[b] = post_e / total_pre if total_pre > 0 else 0.0
    return SpectralReport(band, attack, ret[LOW], ret[MID], ret[HIGH], post_mean,
                          n_images=n, amplitude=amplitude,
                          channels="luminance" if luminance else "rgb-mean")


# ---------------------------------------------------------------------------
# detection metrics

def empirical_detection(scores_watermarked, scores_null, fprs=DEFAULT_TARGETS) -> dict:
    """AUROC (rank statistic, ties count half) and TPR at empirical-FPR thresholds."""
    w = np.asarray(scores_watermarked, dtype=np.float64).ravel()
    o = np.asarray(scores_null, dtype=np.float64).ravel()
    if w.size == 0 or o.size == 0:
        raise BenchError("empty score set")
    ranks = rankdata(np.concatenate([w, o]), method="average")
    auroc = (ranks[: w.size].sum() - w.size * (w.size + 1) / 2.0) / (w.size * o.size)
    tpr = {}
    for f in fprs:
        thr = np.quantile(o, 1.0 - f, method="higher")
        tpr[_fmt_fpr(f)] = float(np.mean(w > thr))
    return {"auroc": float(auroc), "tpr_at_fpr": tpr}


def detection_score(decoded: BitMessage, soft: np.ndarray, truth: BitMessage) -> float:
    """Confidence-weighted agreement with the reference message, in [-1, 1]."""
    agree = np.where(decoded.bits == truth.bits, 1.0, -1.0)
    return float(np.mean(agree * np.abs(soft)))


# ---------------------------------------------------------------------------
# benchmark

@dataclass(frozen=True)
class BenchConfig:
    methods: tuple
    attacks: tuple
    keys: dict
    targets: tuple = DEFAULT_TARGETS
    master_seed: int = 0
    p_o: float = 0.5
    resolution: int = BENCH_RESOLUTION

    def to_dict(self) -> dict:
        return {
            "methods": list(self.methods),
            "attacks": [{"kind": a.kind, "severity": a.severity, "seed": a.seed,
                         "params": a.resolved_params()} for a in self.attacks],
            "keys": {m: json.loads(self.keys[m].to_json()) for m in self.methods},
            "targets": list(self.targets),
            "master_seed": self.master_seed,
            "p_o": self.p_o,
            "resolution": self.resolution,
            "ladder_version": LADDER_VERSION,
        }


def _image_token(digest: str) -> int:
    # seeds derive from image content, not position, so corpus order is irrelevant
    return int(digest[:16], 16)


def _attack_seed(master_seed: int, attack: AttackSpec, image: int, cell: int) -> int:
    ss = np.random.SeedSequence([master_seed, attack.seed, image, cell])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _prepare(img: ImageBuf, resolution: int) -> ImageBuf:
    if img.colorspace != RGB:
        raise BenchError("corpus images must be RGB")
    if (img.width, img.height) != (resolution, resolution):
        img = to_lattice(img.with_data(resize_array(img.data, resolution, resolution)))
    return img


def _image_job(args):
    corpus, index, cfg = args
    img = _prepare(corpus[index], cfg.resolution)
    digest = corpus_hash([img])
    token = _image_token(digest)
    attacked_null = []
    for j, atk in enumerate(cfg.attacks):
        spec = AttackSpec(atk.kind, atk.severity, _attack_seed(cfg.master_seed, atk, token, j),
                          atk.params)
        attacked_null.append((spec, apply_attack(img, spec)))
    out = {"hash": digest, "methods": {}}
    for mi, method in enumerate(cfg.methods):
        key = cfg.keys[method]
        rng = np.random.default_rng([cfg.master_seed, token, mi])
        truth = BitMessage.random(CAPACITY[method], rng)
        marked = to_lattice(scaled_embed(method, img, truth, key))
        row = {
            "psnr": psnr(img, marked),
            "ssim": ssim(img, marked),
            "pattern": _diff_mag(marked.data, img.data, False),
            "cells": [],
        }
        for spec, null_img in attacked_null:
            dec_w, soft_w = scaled_extract(method, apply_attack(marked, spec), key)
            dec_o, soft_o = scaled_extract(method, null_img, key)
            row["cells"].append({
                "match_w": int(np.count_nonzero(dec_w.bits == truth.bits)),
                "match_o": int(np.count_nonzero(dec_o.bits == truth.bits)),
                "score_w": detection_score(dec_w, soft_w, truth),
                "score_o": detection_score(dec_o, soft_o, truth),
            })
        out["methods"][method] = row
    return out


@dataclass
class BenchResult:
    records: list
    config: BenchConfig
    corpus_hash: str
    pattern_maps: dict


def run_benchmark(corpus, methods=None, attacks=(IDENTITY,), keys=None,
                  targets=DEFAULT_TARGETS, master_seed: int = 0, p_o: float = 0.5,
                  resolution: int = BENCH_RESOLUTION, workers: int = 1,
                  progress=None) -> BenchResult:
    """Run every (method, attack) cell over ``corpus``.

    ``corpus`` is any sequence of RGB images (e.g. a lazy corpus). Results are
    identical for any ``workers`` count.
    """
    n = len(corpus)
    if n == 0:
        raise BenchError("empty corpus")
    methods = tuple(canonical_method(m) for m in (methods or ("LFQIM", "DWT_DCT", "DWT_DCT_SVD")))
    keys = dict(keys or {})
    for m in methods:
        keys.setdefault(m, default_key(m, seed=master_seed))
    cfg = BenchConfig(methods, tuple(attacks), keys, tuple(targets), int(master_seed),
                      float(p_o), int(resolution))

    jobs = [(corpus, i, cfg) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_image_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_image_job(job))
            if progress is not None:
                progress(len(results), n)

    digest = _combine_hashes(r["hash"] for r in results)
    records = []
    pattern_maps = {}
    for method in methods:
        k = CAPACITY[method]
        rows = [r["methods"][method] for r in results]
        pattern_maps[method] = sum(r["pattern"] for r in rows) / n
        psnr_mean = _mean(min(r["psnr"], 100.0) for r in rows)
        ssim_mean = _mean(r["ssim"] for r in rows)
        taus = {_fmt_fpr(t): tau_for_target_fpr(k, cfg.p_o, t) for t in cfg.targets}
        for j, atk in enumerate(cfg.attacks):
            cells = [r["cells"][j] for r in rows]
            mw = np.array([c["match_w"] for c in cells])
            mo = np.array([c["match_o"] for c in cells])
            det = empirical_detection([c["score_w"] for c in cells],
                                      [c["score_o"] for c in cells], cfg.targets)
            records.append(BenchRecord(
                method=method,
                attack=atk.label,
                attack_params=atk.resolved_params(),
                n_images=n,
                bit_accuracy_mean=_mean(mw / k),
                tpr_at_fpr={t: float(np.mean(mw > tau)) for t, tau in taus.items()},
                auroc=det["auroc"],
                psnr_mean=psnr_mean,
                ssim_mean=ssim_mean,
                corpus_hash=digest,
                tau=dict(taus),
                fpr_empirical={t: float(np.mean(mo > tau)) for t, tau in taus.items()},
                null_match_rate=_mean(mo / k),
                p_o=cfg.p_o,
            ))
    return BenchResult(records, cfg, digest, pattern_maps)


def _combine_hashes(hashes) -> str:
    h = hashlib.sha256()
    for x in hashes:
        h.update(x.encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# persistence

CSV_COLUMNS = (
    "schema_version", "method", "attack", "n_images", "bit_accuracy_mean",
    "tpr_at_0.1pct_fpr", "tpr_at_1pct_fpr", "auroc", "psnr_mean", "ssim_mean",
    "null_match_rate", "corpus_hash",
)


def _csv_row(r: BenchRecord) -> list:
    return [CSV_SCHEMA, r.method, r.attack, r.n_images, repr(r.bit_accuracy_mean),
            repr(r.tpr_at_fpr.get(_fmt_fpr(1e-3), math.nan)),
            repr(r.tpr_at_fpr.get(_fmt_fpr(1e-2), math.nan)),
            repr(r.auroc), repr(r.psnr_mean), repr(r.ssim_mean),
            repr(r.null_match_rate), r.corpus_hash]


def write_report(records, fmt: str, path, config: dict | None = None) -> None:
    """Write bench records (JSON or CSV) or a SpectralReport (JSON)."""
    path = Path(path)
    if isinstance(records, SpectralReport):
        if fmt != "json":
            raise BenchError("spectral reports are written as JSON")
        doc = records.to_dict()
        if config is not None:
            doc["config"] = config
        text = json.dumps(doc, indent=2) + "\n"
    elif fmt == "json":
        doc = {"schema": REPORT_SCHEMA, "version": __version__,
               "ladder_version": LADDER_VERSION}
        if config is not None:
            doc["config"] = config
        doc["records"] = [r.to_dict() for r in records]
        text = json.dumps(doc, indent=2) + "\n"
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(_csv_row(r))
        text = buf.getvalue()
    else:
        raise BenchError(f"unknown report format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise BenchError(f"{path}: cannot write report ({exc})") from exc


def read_report(path) -> tuple[dict, list]:
    doc = json.loads(Path(path).read_text())
    return doc, [BenchRecord.from_dict(d) for d in doc.get("records", [])]


def render_heatmap(mag: np.ndarray, path) -> None:
    """Log-scaled, centre-shifted, min-max normalised 8-bit grayscale PNG."""
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim == 3:
        mag = mag.mean(axis=2)
    if mag.size == 0:
        raise BenchError("empty map")
    img = log_magnitude(mag)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        img = (img - lo) / (hi - lo)
    else:
        img = np.zeros_like(img)
    q = np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)
    try:
        Image.fromarray(q, mode="L").save(Path(path), format="PNG", optimize=False,
                                          compress_level=6)
    except OSError as exc:
        raise BenchError(f"{path}: cannot write heatmap ({exc})") from exc


def write_bench_outputs(result: BenchResult, out_dir) -> list[Path]:
    """report.json, summary.csv and one spectral-pattern heatmap per method."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = result.config.to_dict()
    cfg["corpus_hash"] = result.corpus_hash
    written = [out_dir / "report.json", out_dir / "summary.csv"]
    write_report(result.records, "json", written[0], config=cfg)
    write_report(result.records, "csv", written[1])
    for method, mag in result.pattern_maps.items():
        p = out_dir / f"pattern_{method.lower()}.png"
        render_heatmap(mag, p)
        written.append(p)
    return written
