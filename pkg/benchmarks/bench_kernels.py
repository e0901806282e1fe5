"""Benchmark the rasterizer backends (compiled vs pure NumPy).

Runs the same scenes through both implementations, checks the outputs
are bit-identical, and reports throughput. Usage:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from reshapekit._kernels import rasterize_cython, rasterize_numpy
from reshapekit.bodymodel import make_test_model, skin
from reshapekit.render import frame_body_camera


def random_triangle_scene(seed: int, n_faces: int, size: int):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-10, size + 10, (3 * n_faces, 2))
    attr = rng.uniform(0.5, 5.0, 3 * n_faces)
    faces = np.arange(3 * n_faces, dtype=np.int32).reshape(n_faces, 3)
    return xy, attr, faces


def body_scene(seed: int, size: int):
    model = make_test_model(seed=seed)
    rng = np.random.default_rng(seed + 1)
    mesh = skin(model, rng.normal(0, 1, 4), rng.normal(0, 0.2, 12))
    camera = frame_body_camera(mesh, size, size)
    xy, z = camera.project(mesh.vertices)
    keep = np.all(z[mesh.faces] > 1e-6, axis=1)
    return xy, -1.0 / z, np.ascontiguousarray(mesh.faces[keep])


def run(fn, xy, attr, faces, size, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(xy, attr, faces, size, size)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if rasterize_cython is None:
        print("compiled backend not built; run `python3 setup.py build_ext --inplace`")
        return

    scenes = [
        ("100 random tris @ 256", *random_triangle_scene(0, 100, 256), 256),
        ("1000 random tris @ 512", *random_triangle_scene(1, 1000, 512), 512),
        ("posed body @ 768", *body_scene(2, 768), 768),
        ("posed body @ 1024", *body_scene(3, 1024), 1024),
    ]

    print(f"{'scene':<26} {'numpy':>10} {'compiled':>10} {'speedup':>8}  identical")
    for name, xy, attr, faces, size in scenes:
        xy = np.ascontiguousarray(xy, dtype=np.float64)
        attr = np.ascontiguousarray(attr, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int32)
        t_np, (v_np, o_np) = run(rasterize_numpy, xy, attr, faces, size, args.repeats)
        t_cy, (v_cy, o_cy) = run(rasterize_cython, xy, attr, faces, size, args.repeats)
        identical = (
            v_np.tobytes() == np.asarray(v_cy).tobytes()
            and o_np.tobytes() == np.asarray(o_cy).tobytes()
        )
        print(
            f"{name:<26} {t_np * 1000:>8.2f}ms {t_cy * 1000:>8.2f}ms "
            f"{t_np / t_cy:>7.1f}x  {identical}"
        )
        if not identical:
            raise SystemExit("backends disagree bit-for-bit")


if __name__ == "__main__":
    main()
