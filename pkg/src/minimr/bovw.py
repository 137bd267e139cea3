"""Bag-of-visual-words indexing: descriptors, vocabulary, histograms, jobs.

The descriptor extractor is a dense grid of SIFT-style patches (the pipeline
is the point here, not the detector, so the extractor is deterministic and
pluggable): stride 8 and patch 16 at scale 1, doubled at scale 2, each patch
described by a 4x4 grid of cells with 8 gradient-orientation bins, giving
128 dimensions, L2-normalized, clamped at 0.2 and renormalized. A flat patch
has zero gradients everywhere; normalizing its zero vector yields the zero
vector by definition.

Index pipeline modes:
  component   -- extractor job materializes every descriptor to a CSV
                 (``image_id,x,y,scale,f1,...,fD``), a second job quantizes
                 and histograms the CSV rows; deliberately IO-heavy.
  monolithic  -- one job runs extract -> quantize -> histogram in the mapper
                 with no intermediate output.
Both modes produce byte-identical index files for identical inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import JobSpec, run_job
from .errors import InputError
from .records import Record, read_records
from .scheduler import TrackerNode

PATCH = 16
STRIDE = 8
SCALES = (1, 2)
N_CELLS = 4
N_BINS = 8
DIM = N_CELLS * N_CELLS * N_BINS  # 128
CLAMP = 0.2


@dataclass
class Descriptor:
    image_id: str
    x: int
    y: int
    scale: int
    vector: np.ndarray  # shape (DIM,)


@dataclass
class VisualVocabulary:
    words: np.ndarray  # shape (k, D)
    seed: int
    iterations: int
    inertia_history: list[float]

    @property
    def k(self) -> int:
        return self.words.shape[0]

    @property
    def dim(self) -> int:
        return self.words.shape[1]


@dataclass
class BovwHistogram:
    image_id: str
    counts: np.ndarray  # shape (k,), non-negative ints summing to n_descriptors


# -- PGM (P5) raster IO ------------------------------------------------------


def write_pgm(path: str, pixels: np.ndarray) -> None:
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ValueError("expected 2-D uint8 pixel array")
    h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(pixels.tobytes())


def read_pgm(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise InputError("cannot read image %s: %s" % (path, exc)) from exc
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # header comment
            pos = data.find(b"\n", pos)
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5" or fields[3] != b"255":
        raise InputError("%s: not an 8-bit P5 image" % path)
    w, h = int(fields[1]), int(fields[2])
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise InputError("%s: truncated raster" % path)
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w)


# -- descriptor extraction ---------------------------------------------------


def grid_positions(side: int, patch: int, stride: int) -> np.ndarray:
    """Top-left offsets of patches along one axis; empty if side < patch."""
    if side < patch:
        return np.empty(0, dtype=np.int64)
    return np.arange(0, side - patch + 1, stride, dtype=np.int64)


def _scale_descriptors(img: np.ndarray, scale: int) -> tuple[np.ndarray, np.ndarray]:
    patch = PATCH * scale
    stride = STRIDE * scale
    cell = patch // N_CELLS
    h, w = img.shape
    ys = grid_positions(h, patch, stride)
    xs = grid_positions(w, patch, stride)
    if len(ys) == 0 or len(xs) == 0:
        return np.empty((0, 3), dtype=np.int64), np.empty((0, DIM))

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    bins = np.floor((ang + np.pi) * (N_BINS / (2.0 * np.pi))).astype(np.int64)
    bins[bins == N_BINS] = 0  # angle exactly +pi wraps around

    # Per-orientation magnitude planes; a handful of big array ops keeps the
    # math in long GIL-free kernels so map tasks parallelize on threads.
    planes = np.where(bins[None, :, :] == np.arange(N_BINS)[:, None, None], mag, 0.0)
    windows = np.lib.stride_tricks.sliding_window_view(planes, (patch, patch), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (bins, ny, nx, patch, patch)
    ny, nx = len(ys), len(xs)
    cells = windows.reshape(N_BINS, ny, nx, N_CELLS, cell, N_CELLS, cell)
    sums = cells.sum(axis=(4, 6))  # (bins, ny, nx, cy, cx)
    feats = sums.transpose(1, 2, 3, 4, 0)  # (ny, nx, cy, cx, bins)

    vecs = np.ascontiguousarray(feats).reshape(-1, DIM)
    _normalize_rows(vecs)
    np.clip(vecs, None, CLAMP, out=vecs)
    _normalize_rows(vecs)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    locs = np.column_stack(
        [xx.ravel(), yy.ravel(), np.full(xx.size, scale, dtype=np.int64)]
    )
    return locs, vecs


def _normalize_rows(vecs: np.ndarray) -> None:
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    nz = norms[:, 0] > 0
    vecs[nz] /= norms[nz]


def dense_descriptors(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All dense-grid descriptors of a grayscale raster.

    Returns (locations, vectors): locations are (x, y, scale) rows ordered by
    scale then row-major grid position; vectors is float64 of shape (n, 128).
    """
    if img.size == 0:
        raise InputError("empty image")
    img = np.asarray(img, dtype=np.float64)
    locs, vecs = [], []
    for scale in SCALES:
        l, v = _scale_descriptors(img, scale)
        locs.append(l)
        vecs.append(v)
    return np.concatenate(locs), np.concatenate(vecs)


def extract_descriptors(img: np.ndarray, image_id: str = "") -> list[Descriptor]:
    locs, vecs = dense_descriptors(img)
    return [
        Descriptor(image_id, int(x), int(y), int(s), vecs[i])
        for i, (x, y, s) in enumerate(locs)
    ]


# -- vocabulary (k-means) -----------------------------------------------------


def _dist2(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            centers[i] = points[rng.integers(n)]
        else:
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), target))
            centers[i] = points[min(idx, n - 1)]
        np.minimum(closest, ((points - centers[i]) ** 2).sum(axis=1), out=closest)
    return centers


def build_vocabulary(
    sample: np.ndarray | Sequence[Descriptor],
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-4,
) -> VisualVocabulary:
    """Lloyd's k-means with k-means++ seeding over a descriptor sample.

    Stops after ``max_iter`` iterations or when the relative inertia
    improvement drops below ``tol``. Inertia never increases between
    iterations; empty clusters are re-seeded to the point currently farthest
    from its center, and any exactly-duplicate words left at the end are
    re-seeded the same way so words stay pairwise distinct.
    """
    if not isinstance(sample, np.ndarray):
        sample = np.stack([d.vector for d in sample])
    points = np.asarray(sample, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if points.shape[0] < k:
        raise InputError("need at least k=%d sample descriptors, got %d" % (k, points.shape[0]))
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(points, k, rng)

    history: list[float] = []
    iterations = 0
    assign = None
    for _ in range(max_iter):
        d2 = _dist2(points, centers)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(len(points)), assign].sum())
        iterations += 1
        if history and history[-1] > 0 and (history[-1] - inertia) / history[-1] < tol:
            history.append(inertia)
            break
        history.append(inertia)
        new_centers = np.empty_like(centers)
        counts = np.bincount(assign, minlength=k)
        per_point = d2[np.arange(len(points)), assign].copy()
        for j in range(k):
            if counts[j] > 0:
                new_centers[j] = points[assign == j].mean(axis=0)
            else:
                far = int(per_point.argmax())
                new_centers[j] = points[far]
                per_point[far] = -1.0
        centers = new_centers

    # collapse exact duplicates (degenerate samples only)
    if assign is not None:
        _, first = np.unique(centers, axis=0, return_index=True)
        dup = np.setdiff1d(np.arange(k), first)
        if len(dup):
            d2 = _dist2(points, centers)
            per_point = d2.min(axis=1)
            for j in dup:
                far = int(per_point.argmax())
                centers[j] = points[far]
                per_point[far] = -1.0

    return VisualVocabulary(words=centers, seed=seed, iterations=iterations, inertia_history=history)


def save_vocabulary(vocab: VisualVocabulary, path: str) -> None:
    with open(path, "w") as f:
        f.write("k=%d dim=%d seed=%d iterations=%d\n"
                % (vocab.k, vocab.dim, vocab.seed, vocab.iterations))
        for word in vocab.words:
            f.write(",".join(repr(float(x)) for x in word) + "\n")


def load_vocabulary(path: str) -> VisualVocabulary:
    try:
        with open(path) as f:
            header = f.readline().split()
            meta = dict(kv.split("=") for kv in header)
            words = [
                [float(x) for x in line.split(",")] for line in f if line.strip()
            ]
    except (OSError, ValueError) as exc:
        raise InputError("bad vocabulary file %s: %s" % (path, exc)) from exc
    arr = np.array(words)
    if arr.shape != (int(meta["k"]), int(meta["dim"])):
        raise InputError("vocabulary %s: shape mismatch with header" % path)
    return VisualVocabulary(
        words=arr, seed=int(meta["seed"]), iterations=int(meta["iterations"]),
        inertia_history=[],
    )


# -- quantization and histograms ----------------------------------------------


def quantize_batch(vecs: np.ndarray, words: np.ndarray) -> np.ndarray:
    """Nearest-word index for each row; ties go to the lowest index."""
    if vecs.shape[1] != words.shape[1]:
        raise InputError(
            "descriptor dim %d != vocabulary dim %d" % (vecs.shape[1], words.shape[1])
        )
    return _dist2(np.asarray(vecs, dtype=np.float64), words).argmin(axis=1)


def quantize(descriptor: Descriptor | np.ndarray, vocab: VisualVocabulary) -> int:
    vec = descriptor.vector if isinstance(descriptor, Descriptor) else descriptor
    return int(quantize_batch(np.asarray(vec, dtype=np.float64)[None, :], vocab.words)[0])


def bovw_histogram(
    descriptors: Sequence[Descriptor] | np.ndarray, vocab: VisualVocabulary,
    image_id: str = "",
) -> BovwHistogram:
    """Occurrence counts of each visual word; counts sum to len(descriptors)."""
    if isinstance(descriptors, np.ndarray):
        vecs = descriptors
    elif descriptors:
        vecs = np.stack([d.vector for d in descriptors])
        if not image_id:
            image_id = descriptors[0].image_id
    else:
        vecs = np.empty((0, vocab.dim))
    if len(vecs) == 0:
        return BovwHistogram(image_id, np.zeros(vocab.k, dtype=np.int64))
    counts = np.bincount(quantize_batch(vecs, vocab.words), minlength=vocab.k)
    return BovwHistogram(image_id, counts)


# -- index pipeline -----------------------------------------------------------


def image_id_for(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _counts_csv(counts: np.ndarray) -> bytes:
    return ",".join(str(int(c)) for c in counts).encode()


def _descriptor_csv_rows(image_id: str, locs: np.ndarray, vecs: np.ndarray):
    for (x, y, s), vec in zip(locs, vecs):
        yield "%s,%d,%d,%d,%s" % (
            image_id, x, y, s, ",".join(repr(float(v)) for v in vec)
        )


def parse_descriptor_csv_row(row: bytes) -> tuple[str, np.ndarray]:
    parts = row.decode().split(",")
    return parts[0], np.array([float(v) for v in parts[4:]])


def build_index(
    manifest: str,
    vocab: VisualVocabulary,
    out_path: str,
    workspace: str,
    mode: str = "monolithic",
    map_slots: int = 1,
    split_size: int = 50,
    job_id: str = "bovw",
    nodes: Optional[list[TrackerNode]] = None,
) -> str:
    """Index every image in the manifest; returns the written index path.

    The index holds one ``image_id \\t v1,v2,...,vk`` record per image,
    sorted by image_id. Unreadable images are skipped and logged to the
    job's rejects file. Component mode leaves the descriptor CSV at
    ``<workspace>/<job_id>-extract/descriptors.csv``.
    """
    if mode not in ("monolithic", "component"):
        raise ValueError("mode must be 'monolithic' or 'component'")
    words = vocab.words
    k = vocab.k

    if mode == "monolithic":
        def mono_mapper(record: Record, task_io) -> Iterable[Record]:
            path = record.key.decode()
            try:
                img = read_pgm(path)
            except InputError as exc:
                task_io.reject(("%s\t%s" % (path, exc)).encode())
                return
            _, vecs = dense_descriptors(img)
            if len(vecs):
                counts = np.bincount(quantize_batch(vecs, words), minlength=k)
            else:
                counts = np.zeros(k, dtype=np.int64)
            yield Record(image_id_for(path).encode(), _counts_csv(counts))

        def first_value(key: bytes, values: list[bytes]) -> Iterable[Record]:
            yield Record(key, values[0])

        result = run_job(JobSpec(
            job_id=job_id, input_manifest=manifest, mapper=mono_mapper,
            reducer=first_value, workspace=workspace, split_size=split_size,
            num_reducers=1, map_slots=map_slots, nodes=nodes,
        ))
        _write_index(list(read_records(result.output_paths[0])), out_path)
        return out_path

    # component mode: job 1 extracts to CSV, job 2 quantizes and histograms
    extract_dir = os.path.join(workspace, "%s-extract" % job_id)
    os.makedirs(extract_dir, exist_ok=True)
    indexed_ids: set[str] = set()

    def extract_mapper(record: Record, task_io) -> Iterable[Record]:
        path = record.key.decode()
        try:
            img = read_pgm(path)
        except InputError as exc:
            task_io.reject(("%s\t%s" % (path, exc)).encode())
            return
        locs, vecs = dense_descriptors(img)
        for row in _descriptor_csv_rows(image_id_for(path), locs, vecs):
            yield Record(row.encode(), b"")

    extract_result = run_job(JobSpec(
        job_id="%s-extract" % job_id, input_manifest=manifest,
        mapper=extract_mapper, workspace=workspace, split_size=split_size,
        num_reducers=0, map_slots=map_slots, nodes=nodes,
    ))
    csv_path = os.path.join(extract_dir, "descriptors.csv")
    with open(csv_path, "wb") as f:
        for part in extract_result.output_paths:
            for record in read_records(part):
                f.write(record.key + b"\n")

    rejected = set()
    if extract_result.rejects_path:
        with open(extract_result.rejects_path, "rb") as f:
            for line in f.read().splitlines():
                rejected.add(image_id_for(line.split(b"\t")[0].decode()))
    for entry in _manifest_image_ids(manifest):
        if entry not in rejected:
            indexed_ids.add(entry)

    def quantize_mapper(record: Record, task_io) -> Iterable[Record]:
        image_id, vec = parse_descriptor_csv_row(record.key)
        yield Record(image_id.encode(), b"%d" % quantize_batch(vec[None, :], words)[0])

    def histogram_reducer(key: bytes, values: list[bytes]) -> Iterable[Record]:
        counts = np.bincount([int(v) for v in values], minlength=k)
        yield Record(key, _counts_csv(counts))

    index_result = run_job(JobSpec(
        job_id="%s-index" % job_id, input_manifest=csv_path,
        mapper=quantize_mapper, reducer=histogram_reducer, workspace=workspace,
        split_size=max(split_size * 50, 1000), num_reducers=1,
        map_slots=map_slots, nodes=nodes,
    ))
    records = list(read_records(index_result.output_paths[0]))
    seen = {r.key.decode() for r in records}
    for image_id in indexed_ids - seen:  # images with zero descriptors
        records.append(Record(image_id.encode(), _counts_csv(np.zeros(k, dtype=np.int64))))
    records.sort(key=lambda r: r.key)
    _write_index(records, out_path)
    return out_path


def _manifest_image_ids(manifest: str) -> list[str]:
    from .records import read_manifest

    return [image_id_for(r.key.decode()) for r in read_manifest(manifest)]


def _write_index(records: list[Record], out_path: str) -> None:
    from .records import encode_record

    with open(out_path, "wb") as f:
        for record in records:
            f.write(encode_record(record) + b"\n")
