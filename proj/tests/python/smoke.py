"""End-to-end smoke checks for the python bindings."""

import json
import math
import pathlib
import sys
import tempfile

import numpy as np

import evgs


def check_core_pipeline():
    scene = evgs.make_demo_scene()
    assert len(scene) == 8

    spec = evgs.demo_orbit()
    spec.n_frames = 10
    spec.duration_us = 100000
    k = evgs.demo_intrinsics()

    orbit = evgs.render_orbit(scene, spec, k)
    assert len(orbit.frames) == 10
    t0, img0 = orbit.frames[0]
    assert t0 == 0
    assert img0.shape == (64, 64, 3)
    assert 0.0 <= img0.min() and img0.max() <= 1.0

    stream = evgs.simulate_events(orbit.frames, evgs.SimConfig())
    assert len(stream) > 0
    assert stream.width == 64 and stream.threshold == 0.1
    arr = stream.numpy()
    assert arr.shape == (len(stream), 4)
    assert (np.diff(arr[:, 0]) >= 0).all(), "timestamps must be sorted"
    assert set(np.unique(arr[:, 3])) <= {-1, 1}

    frame = stream.accumulate(-1, int(arr[-1, 0]))
    assert frame.shape == (64, 64)
    # every accumulated value is an integer multiple of the threshold
    steps = frame / stream.threshold
    assert np.abs(steps - np.round(steps)).max() < 1e-9

    ts = [int(t) for t, _ in orbit.frames[1:]]
    priors = evgs.naive_integrate(stream, ts)
    assert priors.source == "naive"
    assert len(priors) == len(ts)


def check_metrics():
    rng = np.random.default_rng(11)
    ref = 0.2 + 0.6 * rng.random((32, 32, 3))
    assert evgs.psnr(ref, ref) == 100.0
    assert abs(evgs.ssim(ref, ref) - 1.0) < 1e-9

    pred = np.clip(ref + 0.05 * rng.standard_normal(ref.shape), 0.0, 1.0)
    assert evgs.psnr(pred, ref) < 40.0

    aligned, gains, offsets, degenerate = evgs.log_affine_align(ref, ref)
    assert not degenerate
    assert max(abs(g - 1.0) for g in gains) < 1e-12
    assert max(abs(b) for b in offsets) < 1e-12
    assert np.abs(aligned - ref).max() < 1e-12

    zero = np.zeros((32, 32))
    assert evgs.event_loss(ref[..., 0], ref[..., 0], zero) == 0.0


def check_config():
    canonical = evgs.canonical_config("{}")
    doc = json.loads(canonical)
    assert doc["losses"]["lambda_event"] == 0.02
    assert doc["schedule"]["k_start"] == 150000
    assert evgs.canonical_config(canonical) == canonical
    try:
        evgs.canonical_config('{"schedule": {"kend": 1}}')
    except evgs.ConfigError as e:
        assert "schedule.kend" in str(e)
    else:
        raise AssertionError("unknown key was accepted")


def check_cli_round_trip(tmp):
    tmp = pathlib.Path(tmp)
    sim_cfg = tmp / "sim.json"
    sim_cfg.write_text(json.dumps({
        "simulator": {"n_frames": 10, "duration_us": 200000},
        "paths": {"out_dir": str(tmp / "sim")},
    }))
    code, out, err = evgs.cli(["simulate", "--config", str(sim_cfg)])
    assert code == 0, err

    train_cfg = tmp / "train.json"
    train_cfg.write_text(json.dumps({
        "seed": 1,
        "schedule": {"warm_up_iters": 10, "event_iters": 15, "k_start": 300, "k_end": 100,
                      "densify_interval": 8, "checkpoint_interval": 20},
        "scene": {"n_init": 30, "sh_degree": 0},
        "prior": {"n_frames": 4},
        "paths": {"out_dir": str(tmp / "run"),
                   "events": str(tmp / "sim" / "events.evt"),
                   "trajectory": str(tmp / "sim" / "trajectory.json")},
    }))
    code, out, err = evgs.cli(["train", "--config", str(train_cfg)])
    assert code == 0, err
    assert (tmp / "run" / "final_scene.json").exists()

    render_cfg = tmp / "render.json"
    render_cfg.write_text(json.dumps({
        "paths": {"out_dir": str(tmp / "views"),
                   "checkpoint": str(tmp / "run" / "final_scene.json"),
                   "trajectory": str(tmp / "sim" / "trajectory.json")},
    }))
    code, out, err = evgs.cli(["render", "--config", render_cfg.as_posix()])
    assert code == 0, err
    assert len(list((tmp / "views").glob("*.png"))) == 10

    eval_cfg = tmp / "eval.json"
    eval_cfg.write_text(json.dumps({
        "paths": {"renders": str(tmp / "views"),
                   "reference": str(tmp / "sim" / "frames"),
                   "metrics": str(tmp / "metrics.json")},
    }))
    code, out, err = evgs.cli(["eval", "--config", str(eval_cfg)])
    assert code == 0, err
    metrics = json.loads((tmp / "metrics.json").read_text())
    assert len(metrics["views"]) == 10
    assert math.isfinite(metrics["mean_psnr"])

    code, _, err = evgs.cli(["train", "--config", str(tmp / "absent.json")])
    assert code == 2 and "absent.json" in err


def main():
    check_core_pipeline()
    check_metrics()
    check_config()
    with tempfile.TemporaryDirectory(prefix="evgs_py_smoke_") as tmp:
        check_cli_round_trip(tmp)
    print("python smoke: all checks passed")


if __name__ == "__main__":
    sys.exit(main())
