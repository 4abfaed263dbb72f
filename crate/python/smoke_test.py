"""Smoke test for the `avgen` extension module.

Build first, then run from the repository root:

    cargo build --release -p avgen-python --features extension-module
    python3 python/smoke_test.py

If `avgen` is not importable (no wheel installed) the script loads
target/release/libavgen.so (or the debug build) directly.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys
import tempfile


def load_avgen():
    try:
        import avgen

        return avgen
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        for name in ("libavgen.so", "libavgen.dylib", "avgen.dll"):
            lib = root / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("avgen", str(lib))
                spec = importlib.util.spec_from_loader("avgen", loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                sys.modules["avgen"] = module
                return module
    sys.exit("avgen extension not found; build it with cargo first")


SMALL = {
    "data": {"clips": 6, "clip_frames": 8, "scene_frames": 16, "height": 8, "width": 8, "samples_per_frame": 20},
    "model": {"video_hidden": [16], "audio_hidden": [16]},
    "schedule": {"T": 20},
    "train": {"steps": 3, "threads": 1},
}


def main():
    avgen = load_avgen()

    s = avgen.NoiseSchedule.full_scale()
    assert len(s) == 2000
    prod = 1.0
    for t in range(1, 2001):
        prod *= 1.0 - s.beta(t)
    assert abs(s.alpha_bar(2000) - prod) <= 1e-12 * prod
    assert s.alpha_bar(0) == 1.0

    toy = avgen.NoiseSchedule(10, 1e-3, 0.2)
    x = avgen.q_sample([1.0, -1.0], 3, [0.0, 0.0], toy)
    assert abs(x[0] - math.sqrt(toy.alpha_bar(3))) < 1e-15

    assert avgen.cfg_combine([1.0], [3.0], 0.0) == [1.0]
    assert avgen.cfg_combine([1.0], [3.0], 2.0) == [5.0]

    a = [[0.0], [1.0], [2.0], [3.0]]
    b = [[1.0], [2.0], [3.0], [4.0]]
    assert abs(avgen.frechet_distance(a, b) - 1.0) < 1e-9

    assert avgen.resolve_prompt("a bouncing ball") == 0
    assert avgen.resolve_prompt("soft glow") == 1
    assert avgen.resolve_prompt("meadow") is None

    try:
        avgen.NoiseSchedule(0)
    except avgen.AvgenError as e:
        assert "exit code 2" in str(e)
    else:
        raise AssertionError("T=0 accepted")

    cfg = json.dumps(SMALL)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        manifest = avgen.generate_data(str(tmp / "real"), cfg)
        summary = json.loads(avgen.train(str(manifest), "joint", str(tmp / "j.ckpt"), cfg))
        assert summary["steps_run"] == 3 and math.isfinite(summary["final_loss"])
        gen = avgen.sample(str(tmp / "j.ckpt"), str(tmp / "gen"), count=4, config_json=cfg)
        report = json.loads(avgen.evaluate(str(manifest), str(gen)))
        assert set(report) == {"fad", "fvd", "sync_matched", "sync_shuffled", "n"}
        assert report["n"] == 4 and math.isfinite(report["fad"])

    print("avgen smoke test passed")


if __name__ == "__main__":
    main()
