"""Nth-order Riesz filterbank in the frequency domain and texture features.

Component responses for multi-index n = (n_1..n_d) with sum N:

    R_n(w) = (-i)^N sqrt(N! / (n_1! ... n_d!)) w_1^n_1 ... w_d^n_d / ||w||^N

with R_n(0) = 0 (the multiplier is singular at DC). By the multinomial
theorem the squared magnitudes of all components sum to 1 at every nonzero
frequency, so the channels form a tight frame.

Scales come from an isotropic dyadic pyramid of raised-cosine (Meyer-style)
radial windows that crossfade over one octave around each dyadic boundary
pi/2^j; the finest band is flat up to the grid corners and the coarsest flat
down to (but excluding) DC, so the squared windows tile the whole retained
spectrum exactly and energy accounting stays exact.

Features: per (scale, component), energy = mean squared magnitude of the
inverse-transformed coefficients, ordered by scale ascending then multi-index
(first index descending, as enumerated).
"""

from __future__ import annotations

import math
import os
import struct
import threading
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .core import JobResult, JobSpec, run_job
from .errors import InputError
from .records import Record, encode_record, read_records
from .scheduler import TrackerNode
from .streaming import StreamingTaskSpec


def multi_indices(order: int, d: int) -> list[tuple[int, ...]]:
    """All d-tuples of non-negative ints summing to ``order``, first index descending."""
    if order < 0 or d < 1:
        raise ValueError("order and dimensionality must be positive")
    if d == 1:
        return [(order,)]
    out = []
    for n1 in range(order, -1, -1):
        for rest in multi_indices(order - n1, d - 1):
            out.append((n1,) + rest)
    return out


def riesz_component_count(scales: int, order: int, d: int) -> int:
    """M = s * (N+d-1)! / (N! (d-1)!), the filterbank size."""
    if scales < 1 or order < 1 or d < 1:
        raise ValueError("scales, order and dimensionality must be >= 1")
    return scales * math.comb(order + d - 1, d - 1)


def component_responses_at(omega: np.ndarray, order: int) -> np.ndarray:
    """Component responses sampled at arbitrary frequencies.

    omega has shape (m, d); returns complex (m, n_components) with rows at
    ||w|| == 0 set to 0.
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=np.float64))
    d = omega.shape[1]
    indices = multi_indices(order, d)
    norm = np.sqrt((omega * omega).sum(axis=1))
    nz = norm > 0
    out = np.zeros((omega.shape[0], len(indices)), dtype=np.complex128)
    phase = (-1j) ** order
    for col, idx in enumerate(indices):
        coeff = math.sqrt(math.factorial(order) / math.prod(math.factorial(n) for n in idx))
        mono = np.ones(omega.shape[0])
        for axis, power in enumerate(idx):
            if power:
                mono = mono * omega[:, axis] ** power
        out[nz, col] = phase * coeff * mono[nz] / norm[nz] ** order
    return out


@dataclass
class RieszFilterbank:
    order: int
    d: int
    dims: tuple[int, ...]
    indices: list[tuple[int, ...]]
    responses: list[np.ndarray]  # one complex grid per multi-index


_bank_cache: dict = {}
_window_cache: dict = {}
_cache_lock = threading.Lock()


def _omega_grids(dims: tuple[int, ...]) -> list[np.ndarray]:
    axes = [2.0 * np.pi * np.fft.fftfreq(n) for n in dims]
    return list(np.meshgrid(*axes, indexing="ij", sparse=True))


def riesz_filterbank(order: int, d: int, dims: tuple[int, ...]) -> RieszFilterbank:
    """Frequency responses of every order-``order`` component on the grid."""
    if d not in (2, 3):
        raise ValueError("dimensionality must be 2 or 3")
    if len(dims) != d or any(n < 1 for n in dims):
        raise ValueError("dims must be %d positive sizes" % d)
    key = (order, d, tuple(dims))
    with _cache_lock:
        cached = _bank_cache.get(key)
    if cached is not None:
        return cached

    grids = _omega_grids(tuple(dims))
    norm2 = sum(g * g for g in grids)
    norm = np.sqrt(norm2)
    nz = norm > 0
    inv_norm_pow = np.zeros_like(norm)
    inv_norm_pow[nz] = norm[nz] ** (-order)
    phase = (-1j) ** order
    indices = multi_indices(order, d)
    responses = []
    for idx in indices:
        coeff = math.sqrt(math.factorial(order) / math.prod(math.factorial(n) for n in idx))
        mono = np.ones_like(norm)
        for axis, power in enumerate(idx):
            if power:
                mono = mono * grids[axis] ** power
        responses.append((phase * coeff) * mono * inv_norm_pow)
    bank = RieszFilterbank(order=order, d=d, dims=tuple(dims), indices=indices, responses=responses)
    with _cache_lock:
        _bank_cache[key] = bank
    return bank


def band_windows(dims: tuple[int, ...], scales: int) -> list[np.ndarray]:
    """Radial dyadic windows whose squared sum is 1 everywhere off DC.

    Band j peaks on ||w|| in [pi/2^j, pi/2^(j-1)] with half-octave cosine
    crossfades; band 1 stays 1 out to the grid corners and band ``scales``
    stays 1 down to DC (exclusive), so truncation loses no energy.
    """
    key = (tuple(dims), scales)
    with _cache_lock:
        cached = _window_cache.get(key)
    if cached is not None:
        return cached
    grids = _omega_grids(tuple(dims))
    r = np.sqrt(sum(g * g for g in grids))
    u = np.full_like(r, np.inf)
    nz = r > 0
    u[nz] = np.log2(np.pi / r[nz])  # octaves below the pi boundary
    windows = []
    for j in range(1, scales + 1):
        w = np.zeros_like(r)
        inside = np.abs(u - j) < 1.0
        w[inside] = np.cos(0.5 * np.pi * (u[inside] - j))
        if j == 1:
            w[u <= 1.0] = 1.0
        if j == scales:
            w[u >= float(scales)] = 1.0
        w[~nz] = 0.0
        windows.append(w)
    with _cache_lock:
        _window_cache[key] = windows
    return windows


@dataclass
class TextureFeatureVector:
    volume_id: str
    energies: np.ndarray  # length scales * n_components, all >= 0


def analyze_volume(
    voxels: np.ndarray,
    scales: int,
    order: int,
    volume_id: str = "",
    normalize: bool = True,
) -> TextureFeatureVector:
    """Multiscale Riesz energies of one volume.

    Each energy is the mean squared magnitude of one (scale, component)
    coefficient field; the vector is ordered by scale ascending then the
    component enumeration order. Volumes are made zero-mean first unless
    ``normalize`` is False.
    """
    voxels = np.asarray(voxels, dtype=np.float64)
    if voxels.ndim != 3:
        raise InputError("expected a 3-D volume, got shape %s" % (voxels.shape,))
    if not np.isfinite(voxels).all():
        raise InputError("volume contains non-finite voxels")
    if min(voxels.shape) < 2**scales:
        raise InputError(
            "volume dims %s too small for %d scales (need >= %d)"
            % (voxels.shape, scales, 2**scales)
        )
    if normalize:
        voxels = voxels - voxels.mean()
    spectrum = np.fft.fftn(voxels)
    bank = riesz_filterbank(order, 3, voxels.shape)
    windows = band_windows(voxels.shape, scales)
    n_vox = voxels.size
    energies = np.empty(scales * len(bank.indices))
    pos = 0
    for w in windows:
        banded = spectrum * w
        for resp in bank.responses:
            coef = np.fft.ifftn(banded * resp)
            energies[pos] = float((coef.real**2 + coef.imag**2).sum() / n_vox)
            pos += 1
    return TextureFeatureVector(volume_id=volume_id, energies=energies)


# -- volume file IO -------------------------------------------------------------

_HEADER = struct.Struct("<III")


def write_volume(path: str, voxels: np.ndarray) -> None:
    """12-byte little-endian uint32 dims header, float32 voxels x-fastest."""
    voxels = np.asarray(voxels)
    if voxels.ndim != 3:
        raise ValueError("expected a 3-D volume")
    nx, ny, nz = voxels.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(nx, ny, nz))
        f.write(np.ascontiguousarray(voxels.transpose(2, 1, 0), dtype="<f4").tobytes())


def read_volume(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            header = f.read(_HEADER.size)
            if len(header) != _HEADER.size:
                raise InputError("%s: truncated header" % path)
            nx, ny, nz = _HEADER.unpack(header)
            data = f.read()
    except OSError as exc:
        raise InputError("cannot read volume %s: %s" % (path, exc)) from exc
    expected = 4 * nx * ny * nz
    if len(data) != expected:
        raise InputError("%s: expected %d voxel bytes, found %d" % (path, expected, len(data)))
    arr = np.frombuffer(data, dtype="<f4").reshape(nz, ny, nx)
    return arr.transpose(2, 1, 0).astype(np.float64)


def volume_id_for(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _energies_csv(energies: np.ndarray) -> bytes:
    return ",".join(repr(float(e)) for e in energies).encode()


# -- texture job ------------------------------------------------------------------


def texture_job(
    manifest: str,
    out_path: str,
    workspace: str,
    scales: int = 4,
    order: int = 4,
    group_size: int = 10,
    map_slots: int = 1,
    job_id: str = "riesz3d",
    streaming_exec: Optional[list[str]] = None,
    nodes: Optional[list[TrackerNode]] = None,
) -> JobResult:
    """Analyze every volume in the manifest, ``group_size`` per map task.

    The features file holds ``volume_id \\t e1,...,eM`` sorted by volume_id.
    With ``streaming_exec`` the mapper is that external command, invoked with
    ``--scales S --order N`` appended, reading path records on stdin and
    writing feature records on stdout (the packaged worker:
    ``python3 -m minimr.riesz_worker``). Unreadable volumes are rejected and
    the job continues.
    """
    if streaming_exec is not None:
        mapper: object = StreamingTaskSpec(
            argv=tuple(streaming_exec) + ("--scales", str(scales), "--order", str(order)),
            role="mapper",
        )
    else:
        def mapper(record: Record, task_io) -> Iterable[Record]:
            path = record.key.decode()
            try:
                voxels = read_volume(path)
                features = analyze_volume(voxels, scales, order, volume_id=volume_id_for(path))
            except InputError as exc:
                task_io.reject(("%s\t%s" % (path, exc)).encode())
                return
            yield Record(features.volume_id.encode(), _energies_csv(features.energies))

    def first_value(key: bytes, values: list[bytes]) -> Iterable[Record]:
        yield Record(key, values[0])

    result = run_job(JobSpec(
        job_id=job_id, input_manifest=manifest, mapper=mapper, reducer=first_value,
        workspace=workspace, split_size=group_size, num_reducers=1,
        map_slots=map_slots, nodes=nodes,
    ))
    with open(out_path, "wb") as f:
        for record in read_records(result.output_paths[0]):
            f.write(encode_record(record) + b"\n")
    return result


def load_features(path: str) -> dict[str, np.ndarray]:
    out = {}
    for record in read_records(path):
        out[record.key.decode()] = np.array([float(v) for v in record.value.split(b",")])
    return out
