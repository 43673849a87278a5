"""Image corpora: deterministic synthetic photographs, directory loading, manifests.

The synthetic generator stands in for a photo collection. Each image mixes a
1/f ("pink") luminance field, correlated colour noise, a smooth illumination
gradient and a handful of textured shapes, then applies a small Gaussian
lens blur. That gives roughly the power-law spectrum, edge content and
optical softness of camera photographs.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imagecore import RGB, ImageBuf, load_image, quantize8, save_image

MANIFEST = "manifest.json"
LENS_SIGMA = 1.0
IMAGE_SUFFIXES = (".png", ".ppm")


def _pink_field(rng: np.random.Generator, h: int, w: int, exponent: float) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    amp = f ** (-exponent)
    amp[0, 0] = 0.0
    phase = rng.uniform(0, 2 * np.pi, size=(h, w))
    field = np.fft.ifft2(amp * np.exp(1j * phase)).real
    return field / (field.std() + 1e-12)


def synth_image(seed: int, size: int = 512) -> ImageBuf:
    """One deterministic natural-looking RGB image on the 8-bit lattice."""
    rng = np.random.default_rng(seed)
    h = w = size
    lum = _pink_field(rng, h, w, rng.uniform(0.9, 1.25))
    chroma = [_pink_field(rng, h, w, 1.3) for _ in range(2)]
    base = rng.uniform(0.3, 0.7, size=3)
    tint = rng.normal(0, 0.25, size=3)
    img = np.empty((h, w, 3))
    for c in range(3):
        img[..., c] = base[c] + 0.12 * lum * (1 + tint[c] * 0.3) + 0.04 * chroma[c % 2] * tint[c]

    yy, xx = np.mgrid[0:h, 0:w] / float(size)
    gx, gy = rng.normal(0, 0.15, size=2)
    img += (gx * (xx - 0.5) + gy * (yy - 0.5))[..., None]

    texture = 0.05 * _pink_field(rng, h, w, 1.0)
    for _ in range(int(rng.integers(3, 9))):
        color = rng.uniform(0.1, 0.9, size=3)
        alpha = rng.uniform(0.4, 0.9)
        cy, cx = rng.uniform(0, 1, size=2)
        ry, rx = rng.uniform(0.04, 0.25, size=2)
        if rng.random() < 0.5:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        shift = rng.integers(0, size, size=2)
        tex = np.roll(texture, tuple(shift), axis=(0, 1))[mask][:, None]
        img[mask] = (1 - alpha) * img[mask] + alpha * (color + tex)

    # camera optics never deliver perfectly sharp (chroma) edges
    img = ndimage.gaussian_filter(img, (LENS_SIGMA, LENS_SIGMA, 0), mode="reflect")

    # keep clear of the clip rails so embedding headroom exists in both directions
    lo, hi = np.percentile(img, [0.5, 99.5])
    img = 0.06 + 0.88 * (img - lo) / max(hi - lo, 1e-6)
    img = np.clip(img, 0.02, 0.98)
    return ImageBuf(quantize8(img) / 255.0, RGB)


class SynthCorpus(Sequence):
    """Lazily generated synthetic corpus; images are rebuilt on each access."""

    def __init__(self, n: int, size: int = 512, seed: int = 0):
        self.n, self.size, self.seed = int(n), int(size), int(seed)
        self._seeds = np.random.SeedSequence(self.seed).generate_state(self.n, dtype=np.uint64)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(self.n))]
        if not -self.n <= i < self.n:
            raise IndexError(i)
        return synth_image(int(self._seeds[i]), self.size)


class DirCorpus(Sequence):
    """Images listed by a directory's manifest (or its PNG/PPM files), loaded on access."""

    def __init__(self, directory, limit: int | None = None):
        self.directory = Path(directory)
        paths = list_images(self.directory)
        self.paths = paths[:limit] if limit is not None else paths
        if not self.paths:
            raise FileNotFoundError(f"{os.fspath(directory)}: no images")

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return load_image(self.paths[i])


def synth_corpus(n: int, size: int = 512, seed: int = 0) -> list[ImageBuf]:
    return list(SynthCorpus(n, size, seed))


def corpus_hash(images) -> str:
    """SHA-256 over the 8-bit samples and shapes of every image, in order."""
    h = hashlib.sha256()
    for img in images:
        q = quantize8(img.data)
        h.update(np.asarray(q.shape, dtype=np.int64).tobytes())
        h.update(q.tobytes())
    return h.hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_corpus(directory, n: int, size: int = 512, seed: int = 0) -> Path:
    """Write ``n`` synthetic PNGs plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, img in enumerate(SynthCorpus(n, size, seed)):
        name = f"img_{i:04d}.png"
        save_image(directory / name, img)
        entries.append({"path": name, "sha256": _file_digest(directory / name)})
    return write_manifest(directory, entries, generator={"n": n, "size": size, "seed": seed})


def write_manifest(directory, entries, generator=None) -> Path:
    directory = Path(directory)
    doc = {"schema": "wbench.corpus/1", "images": entries}
    if generator is not None:
        doc["generator"] = generator
    total = hashlib.sha256("".join(e["sha256"] for e in entries).encode()).hexdigest()
    doc["digest"] = total
    path = directory / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    manifest = directory / MANIFEST
    if manifest.exists():
        doc = json.loads(manifest.read_text())
        return [directory / e["path"] for e in doc["images"]]
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_corpus(directory, limit: int | None = None) -> list[ImageBuf]:
    return list(DirCorpus(directory, limit))
