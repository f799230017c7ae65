"""Smoke tests for the pybind11 surface: a few analytic values per op."""

import math

import numpy as np
import pytest

import jmsac


def test_version_string():
    assert jmsac.__version__.startswith("jmsac-")


def test_smooth_l1_values():
    assert jmsac.smooth_l1([0.5], [0.0]) == pytest.approx(0.125)
    assert jmsac.smooth_l1([2.0], [0.0]) == pytest.approx(1.5)
    assert jmsac.smooth_l1([1.0, 2.0], [1.0, 2.0]) == 0.0
    with pytest.raises(Exception):
        jmsac.smooth_l1([1.0], [1.0, 2.0])


def test_cross_entropy_uniform():
    k = 64
    onehot = [0.0] * k
    onehot[7] = 1.0
    assert jmsac.cross_entropy([0.25] * k, onehot) == pytest.approx(math.log(k))


def test_gps_projection_scale_and_roundtrip():
    x, y = jmsac.gps_local_projection((11.0, 0.0), (10.0, 0.0))
    assert x == pytest.approx(111194.93, abs=1.0)
    assert y == 0.0
    lon, lat = jmsac.gps_inverse_projection((1234.5, -678.9), (116.0, 40.0))
    bx, by = jmsac.gps_local_projection((lon, lat), (116.0, 40.0))
    assert bx == pytest.approx(1234.5, abs=1e-6)
    assert by == pytest.approx(-678.9, abs=1e-6)


def test_lidar_projection_pixel():
    img = jmsac.lidar_depth_projection(np.array([[50.0, 0.0, 0.0]]))
    assert img.shape == (1, 64, 256)
    assert img[0, 32, 128] == pytest.approx(0.5)
    assert np.sum(img < 1.0) == 1


def test_radar_clutter_removal_kills_common_mode():
    rng = np.random.default_rng(0)
    common = rng.normal(size=(1, 2, 16)) + 1j * rng.normal(size=(1, 2, 16))
    cube = np.repeat(common, 4, axis=0)
    out = jmsac.radar_range_angle(cube, dft_size=16)
    assert np.max(np.abs(out)) < 1e-9


def test_codebook_and_scan():
    w, az = jmsac.build_codebook(8, 16)
    assert w.shape == (16, 8)
    norms = np.linalg.norm(w, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-6)
    assert np.all(np.diff(az) > 0)
    # All-ones channel: boresight beam reaches the full array gain.
    h = np.ones(8, dtype=complex) / math.sqrt(8.0) * math.sqrt(8.0)
    linear, db, best = jmsac.rsrp_scan(h, 8, 17)
    assert max(linear) == pytest.approx(8.0, rel=1e-6)
    assert best == linear.index(max(linear))


def test_optimal_beam_tie_break():
    assert jmsac.optimal_beam([3.0, 7.0, 7.0]) == 1


def test_rankme_known_spectrum():
    s = np.diag([2.0, 1.0, 1.0])
    r, degenerate = jmsac.rankme(s)
    assert not degenerate
    assert r == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-9)


def test_metrics_cross_checks():
    pred = np.zeros((5, 2))
    truth = np.zeros((5, 2))
    pred[:, 0] = 0.3
    pred[:, 1] = 0.4
    ade, fde = jmsac.ade_fde(pred, truth)
    assert ade == pytest.approx(0.5)
    assert fde == pytest.approx(0.5)

    logits = np.array([[0.0, 5.0, 1.0], [9.0, 0.0, 8.0]])
    assert jmsac.topn_accuracy(logits, [1, 2], 1) == pytest.approx(0.5)
    assert jmsac.topn_accuracy(logits, [1, 2], 2) == pytest.approx(1.0)

    rmse, mae = jmsac.rmse_mae([3.0, 4.0], [0.0, 0.0])
    assert mae == pytest.approx(3.5)
    assert rmse == pytest.approx(math.sqrt(12.5))

    spec = np.array([[10.0, 8.0]])
    mean_dp, hist = jmsac.l1_rsrp_diff([1], [0], spec)
    assert mean_dp == pytest.approx(2.0)
    assert hist[1] == 1


def test_mask_sampling_partitions():
    for pattern in ("temporal-block", "random", "checkerboard"):
        d = jmsac.sample_mask(pattern, t_total=13, rho=0.5, seed=3)
        assert d["total_tokens"] == 559
        assert len(d["mask_idx"]) + len(d["keep_idx"]) == 559
        assert set(d["mask_idx"]).isdisjoint(d["keep_idx"])
        for frames in d["masked_frames"]:
            assert len(frames) == 6


def test_hash64_stability():
    assert jmsac.hash64(42, "pretrain") == jmsac.hash64(42, "pretrain")
    assert jmsac.hash64(42, "pretrain") != jmsac.hash64(43, "pretrain")


def test_generate_dataset(tmp_path):
    config = {
        "seed": 5,
        "scenario": {
            "T": 5, "T_hist": 3, "T_pred": 2, "K": 6, "n_ant": 8,
            "image_size": 24, "radar_n_rx": 4, "radar_n_chirp": 1,
            "radar_n_adc": 12, "lidar_rays_v": 8, "lidar_rays_h": 16,
            "sequences": 1, "frames_per_sequence": 6, "n_obstacles": 1,
        },
        "preprocess": {"vision_size": 20, "radar_dft": 12, "lidar_h": 8, "lidar_w": 16},
        "model": {"dim": 8, "depth": 1, "heads": 2, "predictor_depth": 1,
                  "vision_channels": [2, 3, 4], "spatial_channels": [2, 3]},
        "pretrain": {"rho": 0.4},
    }
    import json

    out = tmp_path / "ds"
    jmsac.generate_dataset(json.dumps(config), str(out))
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["windows"]) == 2
    assert manifest["rf_stats"]["max_db"] >= manifest["rf_stats"]["min_db"]
