"""Riesz filterbank frame identities, component counts, volume features."""

import os
import sys

import numpy as np
import pytest

from minimr.datagen import gen_volumes
from minimr.errors import InputError
from minimr.riesz import (
    analyze_volume,
    band_windows,
    component_responses_at,
    load_features,
    multi_indices,
    read_volume,
    riesz_component_count,
    riesz_filterbank,
    texture_job,
    write_volume,
)

from conftest import make_manifest


# -- component counts ---------------------------------------------------------


def test_first_order_2d_has_two_components():
    assert riesz_component_count(1, 1, 2) == 2


def test_four_scales_order_four_3d_yields_60_components():
    # s=4, N=4, d=3: 15 multi-indices times 4 scales
    assert len(multi_indices(4, 3)) == 15
    assert riesz_component_count(4, 4, 3) == 60


def test_second_order_3d_single_scale():
    assert riesz_component_count(1, 2, 3) == len(multi_indices(2, 3)) == 6


def test_closed_form_matches_enumeration_up_to_n8_d4():
    for d in (1, 2, 3, 4):
        for order in range(1, 9):
            expected = len(multi_indices(order, d))
            assert riesz_component_count(1, order, d) == expected
            assert riesz_component_count(5, order, d) == 5 * expected


def test_invalid_arguments_rejected():
    with pytest.raises(ValueError):
        riesz_component_count(0, 1, 3)
    with pytest.raises(ValueError):
        riesz_component_count(1, 1, 0)


def test_multi_index_enumeration_order():
    got = multi_indices(4, 3)
    assert got[0] == (4, 0, 0)
    assert got[1] == (3, 1, 0)
    assert got[-1] == (0, 0, 4)
    assert all(sum(idx) == 4 for idx in got)
    assert len(set(got)) == 15


# -- frequency responses ----------------------------------------------------------


def test_first_order_2d_responses_are_normalized_gradients():
    omega = np.array([[0.5, 0.25], [3.0, -1.0]])
    resp = component_responses_at(omega, order=1)
    norm = np.sqrt((omega**2).sum(axis=1))
    assert np.allclose(resp[:, 0], -1j * omega[:, 0] / norm)
    assert np.allclose(resp[:, 1], -1j * omega[:, 1] / norm)
    assert np.allclose((np.abs(resp) ** 2).sum(axis=1), 1.0)


def test_tight_frame_identity_at_random_frequencies():
    rng = np.random.default_rng(42)
    for d in (2, 3):
        for order in range(1, 7):
            omega = rng.uniform(-np.pi, np.pi, size=(1000, d))
            omega[np.all(omega == 0, axis=1)] += 0.1  # keep away from DC
            resp = component_responses_at(omega, order)
            total = (np.abs(resp) ** 2).sum(axis=1)
            assert np.abs(total - 1.0).max() < 1e-12


def test_grid_filterbank_matches_analytic_frame_identity():
    bank = riesz_filterbank(order=3, d=3, dims=(8, 8, 8))
    total = sum(np.abs(r) ** 2 for r in bank.responses)
    assert total.flat[0] == 0.0  # DC response defined as 0
    off_dc = total.ravel()[1:]
    assert np.abs(off_dc - 1.0).max() < 1e-12


def test_band_windows_tile_the_whole_retained_spectrum():
    windows = band_windows((16, 16, 16), scales=3)
    total = sum(w * w for w in windows)
    assert total.flat[0] == 0.0
    assert np.abs(total.ravel()[1:] - 1.0).max() < 1e-12


# -- analyze_volume ------------------------------------------------------------------


def test_zero_volume_gives_zero_features():
    features = analyze_volume(np.zeros((16, 16, 16)), scales=2, order=2)
    assert np.all(features.energies == 0.0)
    assert len(features.energies) == riesz_component_count(2, 2, 3)


def test_feature_length_for_four_scales_order_four_on_64_cube():
    rng = np.random.default_rng(17)
    vol = rng.normal(size=(64, 64, 64))
    features = analyze_volume(vol, scales=4, order=4)
    assert len(features.energies) == 60
    assert np.all(features.energies >= 0.0)


def test_axis_swap_permutes_multi_index_components():
    rng = np.random.default_rng(23)
    vol = rng.normal(size=(16, 16, 16))
    scales, order = 2, 3
    base = analyze_volume(vol, scales, order).energies
    swapped = analyze_volume(vol.transpose(1, 0, 2), scales, order).energies
    indices = multi_indices(order, 3)
    lookup = {idx: i for i, idx in enumerate(indices)}
    n = len(indices)
    for s in range(scales):
        for i, (n1, n2, n3) in enumerate(indices):
            j = lookup[(n2, n1, n3)]
            assert swapped[s * n + j] == pytest.approx(base[s * n + i], abs=1e-10)


def test_volume_too_small_for_scales_rejected():
    with pytest.raises(InputError):
        analyze_volume(np.zeros((8, 8, 8)), scales=4, order=1)


def test_non_finite_voxels_rejected():
    vol = np.zeros((16, 16, 16))
    vol[0, 0, 0] = np.nan
    with pytest.raises(InputError):
        analyze_volume(vol, scales=2, order=1)


def test_energies_scale_quadratically_with_amplitude():
    rng = np.random.default_rng(31)
    vol = rng.normal(size=(16, 16, 16))
    e1 = analyze_volume(vol, 2, 2).energies
    e3 = analyze_volume(3.0 * vol, 2, 2).energies
    assert np.allclose(e3, 9.0 * e1, rtol=1e-10)


def test_energy_conservation_against_spatial_oracle():
    # independent oracle: Parseval says summed feature energies recover the
    # zero-mean volume's total energy computed purely in the spatial domain
    rng = np.random.default_rng(40)
    vol = rng.normal(size=(32, 32, 32))
    features = analyze_volume(vol, scales=4, order=2, normalize=True)
    retained = float(((vol - vol.mean()) ** 2).sum())
    got = float(features.energies.sum() * vol.size)
    assert got == pytest.approx(retained, rel=1e-6)


# -- volume file IO ---------------------------------------------------------------------


def test_volume_file_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    vol = rng.normal(size=(5, 6, 7)).astype(np.float32)
    path = str(tmp_path / "v.vol")
    write_volume(path, vol)
    assert np.allclose(read_volume(path), vol)
    assert os.path.getsize(path) == 12 + 4 * 5 * 6 * 7


def test_volume_layout_is_x_fastest(tmp_path):
    vol = np.zeros((2, 2, 2), dtype=np.float32)
    vol[1, 0, 0] = 1.0  # x=1 -> second float in the file
    path = str(tmp_path / "v.vol")
    write_volume(path, vol)
    raw = np.frombuffer(open(path, "rb").read()[12:], dtype="<f4")
    assert raw[1] == 1.0 and raw.sum() == 1.0


def test_truncated_volume_rejected(tmp_path):
    path = str(tmp_path / "bad.vol")
    with open(path, "wb") as f:
        f.write(b"\x02\x00\x00\x00\x02\x00\x00\x00\x02\x00\x00\x00data")
    with pytest.raises(InputError):
        read_volume(path)


# -- texture job -------------------------------------------------------------------------


def test_single_volume_job_equals_direct_analysis(tmp_path, workspace):
    manifest = gen_volumes(str(tmp_path / "vols"), count=1, dims=16, seed=5)
    out = str(tmp_path / "features.tsv")
    texture_job(manifest, out, workspace, scales=2, order=2, group_size=10, job_id="r1")
    features = load_features(out)
    assert list(features) == ["vol-0000"]
    direct = analyze_volume(read_volume(str(tmp_path / "vols" / "vol-0000.vol")), 2, 2)
    assert np.array_equal(features["vol-0000"], direct.energies)


def test_native_and_streaming_modes_agree(tmp_path, workspace):
    manifest = gen_volumes(str(tmp_path / "vols"), count=20, dims=16, seed=6)
    native_out = str(tmp_path / "native.tsv")
    texture_job(manifest, native_out, workspace, scales=2, order=2,
                group_size=10, map_slots=2, job_id="rn")
    streaming_out = str(tmp_path / "streaming.tsv")
    texture_job(manifest, streaming_out, workspace, scales=2, order=2,
                group_size=10, map_slots=2, job_id="rs",
                streaming_exec=[sys.executable, "-m", "minimr.riesz_worker"])
    native = load_features(native_out)
    streaming = load_features(streaming_out)
    assert set(native) == set(streaming) and len(native) == 20
    for vid in native:
        assert np.abs(native[vid] - streaming[vid]).max() < 1e-9


def test_unreadable_volume_rejected_but_job_continues(tmp_path, workspace):
    vol_manifest = gen_volumes(str(tmp_path / "vols"), count=2, dims=16, seed=7)
    entries = open(vol_manifest).read().splitlines()
    entries.insert(1, str(tmp_path / "vols" / "ghost.vol"))
    manifest = make_manifest(tmp_path / "m", entries)
    out = str(tmp_path / "f.tsv")
    texture_job(manifest, out, workspace, scales=2, order=2, job_id="rrej")
    assert sorted(load_features(out)) == ["vol-0000", "vol-0001"]
    assert os.path.exists(os.path.join(workspace, "rrej", "rejects.txt"))
