"""Seeded synthetic data generators standing in for private datasets.

Everything is deterministic for a fixed seed: SVM feature datasets (Gaussian
class blobs with patient-level mean shifts), textured grayscale P5 images,
filtered-noise volumes with anisotropic correlation, and a text corpus for
the word-count workload.
"""

from __future__ import annotations

import os
import random

import numpy as np
from scipy.ndimage import gaussian_filter

from .bovw import write_pgm
from .riesz import write_volume
from .svm import SvmDataset, save_dataset


def gen_svm_dataset(
    path: str,
    patients: int = 10,
    per_patient: int = 20,
    classes: int = 5,
    dim: int = 8,
    seed: int = 0,
    class_sep: float = 4.0,
    patient_shift: float = 0.5,
    noise: float = 1.0,
) -> SvmDataset:
    """Gaussian blobs per class, shifted per patient; balanced labels."""
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=class_sep, size=(classes, dim))
    rows, labels, pids = [], [], []
    for p in range(patients):
        shift = rng.normal(scale=patient_shift, size=dim)
        pid = "p%03d" % p
        for i in range(per_patient):
            label = i % classes
            rows.append(means[label] + shift + rng.normal(scale=noise, size=dim))
            labels.append(label)
            pids.append(pid)
    dataset = SvmDataset(
        X=np.array(rows), labels=np.array(labels), patients=pids, n_classes=classes
    )
    save_dataset(path, dataset)
    return dataset


def gen_images(
    out_dir: str,
    count: int = 100,
    size: int = 64,
    seed: int = 0,
    manifest_name: str = "images.manifest",
) -> str:
    """Seeded textured P5 images (smoothed noise + oriented gratings).

    Writes ``img-<i>.pgm`` files plus a manifest listing them; returns the
    manifest path.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    yy, xx = np.mgrid[0:size, 0:size]
    for i in range(count):
        smooth = gaussian_filter(rng.normal(size=(size, size)), sigma=rng.uniform(1.0, 3.0))
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.05, 0.4)
        phase = rng.uniform(0, 2 * np.pi)
        grating = np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        img = smooth + rng.uniform(0.3, 1.2) * grating
        img = img - img.min()
        peak = img.max()
        if peak > 0:
            img = img / peak
        pixels = np.round(img * 255).astype(np.uint8)
        path = os.path.join(out_dir, "img-%04d.pgm" % i)
        write_pgm(path, pixels)
        paths.append(path)
    manifest = os.path.join(out_dir, manifest_name)
    with open(manifest, "w") as f:
        f.write("".join(p + "\n" for p in paths))
    return manifest


def gen_volumes(
    out_dir: str,
    count: int = 20,
    dims: int = 32,
    seed: int = 0,
    manifest_name: str = "volumes.manifest",
) -> str:
    """Filtered-noise volumes with anisotropic correlation; returns manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        sigmas = rng.uniform(0.5, 3.0, size=3)
        vol = gaussian_filter(rng.normal(size=(dims, dims, dims)), sigma=sigmas)
        std = vol.std()
        if std > 0:
            vol = vol / std
        path = os.path.join(out_dir, "vol-%04d.vol" % i)
        write_volume(path, vol.astype(np.float32))
        paths.append(path)
    manifest = os.path.join(out_dir, manifest_name)
    with open(manifest, "w") as f:
        f.write("".join(p + "\n" for p in paths))
    return manifest


def gen_corpus(
    out_dir: str,
    size_mb: float = 1.0,
    seed: int = 0,
    files: int = 4,
    vocab_size: int = 3000,
) -> list[str]:
    """Seeded text corpus of space-separated lowercase words; returns file paths."""
    os.makedirs(out_dir, exist_ok=True)
    rng = random.Random(seed)
    letters = "abcdefghijklmnopqrstuvwxyz"
    vocab = [
        "".join(rng.choice(letters) for _ in range(rng.randint(3, 10)))
        for _ in range(vocab_size)
    ]
    # zipf-ish frequencies so counts vary
    weights = [1.0 / (r + 1) for r in range(vocab_size)]
    target = int(size_mb * 1024 * 1024)
    per_file = max(target // files, 1)
    paths = []
    for i in range(files):
        lines = []
        written = 0
        while written < per_file:
            words = rng.choices(vocab, weights=weights, k=rng.randint(5, 12))
            line = " ".join(words)
            lines.append(line)
            written += len(line) + 1
        path = os.path.join(out_dir, "corpus-%02d.txt" % i)
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
        paths.append(path)
    return paths
