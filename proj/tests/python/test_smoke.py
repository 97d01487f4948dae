import json
import math

import numpy as np
import pytest

import gyrocomp as gc


def test_rodrigues_and_log():
    r = gc.rodrigues([0.0, 0.0, math.pi / 2])
    np.testing.assert_allclose(r, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    np.testing.assert_allclose(gc.rotation_log(r), [0, 0, math.pi / 2], atol=1e-12)
    assert gc.geodesic_distance(r, np.eye(3)) == pytest.approx(math.pi / 2)


def test_flo_round_trip(tmp_path):
    flow = np.zeros((5, 7, 2))
    flow[..., 0] = np.arange(7)
    flow[..., 1] = -0.25
    path = tmp_path / "f.flo"
    gc.write_flo(path, flow)
    raw = path.read_bytes()
    assert raw[:4] == b"PIEH"
    assert len(raw) == 12 + 5 * 7 * 2 * 4
    np.testing.assert_array_equal(gc.read_flo(path), flow)


def test_geometry_distance_three_four_five():
    pa = np.array([[10.0, 10.0], [100.0, 50.0]])
    assert gc.geometry_distance(np.zeros((270, 360, 2)), pa, pa + [3.0, 4.0]) == 5.0
    assert gc.geometry_distance(np.zeros((270, 360, 2)), pa, pa) == 0.0


def test_gyro_flow_of_still_camera_is_zero():
    cam = gc.CameraConfig()
    gyro = np.array([[t * 5_000_000, 0.0, 0.0, 0.0] for t in range(100)])
    flow = gc.gyro_flow(gyro, (0, 100_000_000), (1, 133_333_333), cam)
    assert flow.shape == (cam.height, cam.width, 2)
    assert np.abs(flow).max() < 1e-12
    h = gc.gyro_homographies(gyro, (0, 100_000_000), (1, 133_333_333), cam)
    assert h.shape == (cam.n_patches, 3, 3)


def test_simulated_gyro_flow_matches_rotation_flow_at_global_shutter():
    cam = gc.CameraConfig()
    cam.readout_s = 0.0
    seq = gc.simulate(seed=4, frames=2, trajectory="constant", translation=0.0, gyro_noise=0.0, flows=True,
                      camera=cam)
    pair = seq["pairs"][0]
    flow = gc.gyro_flow(seq["gyro"], seq["frames"][pair["a"]], seq["frames"][pair["b"]], cam)
    assert np.abs(flow - pair["rotation_flow"]).max() < 1e-6


def test_mixture_on_simulated_pair():
    cam = gc.CameraConfig()
    seq = gc.simulate(seed=2, frames=2, translation=0.05)
    corrs = seq["pairs"][0]["corrs"]
    f = gc.estimate_mixture(corrs, cam.height, n_patches=6, sigma=0.1 * cam.height)
    assert f.shape == (6, 3, 3)
    assert np.linalg.norm(f) == pytest.approx(1.0)
    flow = gc.mixture_gt_flow(corrs, cam, n_patches=6, sigma=0.1 * cam.height)
    assert flow.shape == (cam.height, cam.width, 2)
    assert np.isfinite(flow).all()


def test_identity_correction():
    cam = gc.CameraConfig()
    h = np.stack([gc.rodrigues([0.0, 0.0, 0.001 * i]) for i in range(6)])
    mats, bias = gc.fit_correction([h] * 5, [h] * 5, (cam.cx, cam.cy), cam.height)
    np.testing.assert_allclose(mats, np.broadcast_to(np.eye(3), (6, 3, 3)), atol=1e-9)
    np.testing.assert_allclose(bias, [0, 0], atol=1e-9)
    flow = gc.apply_correction(mats, bias, h, cam.width, cam.height)
    assert flow.shape == (cam.height, cam.width, 2)


def test_errors_carry_kind():
    with pytest.raises(gc.GyrocompError) as info:
        gc.estimate_mixture(np.zeros((3, 4)), 270.0, n_patches=1)
    assert info.value.kind == "ambiguous-solution"
    assert info.value.module == "mixtures"
    with pytest.raises(gc.GyrocompError) as info:
        gc.read_flo("/nonexistent/x.flo")
    assert info.value.kind == "io"


def test_cli_synth_writes_manifest_and_flows(tmp_path):
    out = tmp_path / "data"
    code, stdout, stderr = gc.run_cli(["--log-level", "error", "synth", "--frames", "3", "--seed", "5", "--out", str(out)])
    assert code == 0, stderr
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["pairs"]) == 2
    for entry in manifest["pairs"]:
        for key in ("gyro_flow", "gt_flow"):
            flow = gc.read_flo(out / entry[key])
            assert flow.shape == (manifest["camera"]["height"], manifest["camera"]["width"], 2)
    code, _, stderr = gc.run_cli(["synth"])
    assert code == 2
    assert "--out" in stderr
