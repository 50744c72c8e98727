"""Compiled kernels vs the numpy fallback on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Each case runs the same inputs through both backends, checks that they agree
and prints the median wall time per call.
"""
from __future__ import annotations

import argparse
import json
import statistics
import time

import numpy as np

from advloop import kernels
from advloop.loop.episode import resolve_geometry
from advloop.shape.vehicles import AssetLibrary, procedural_vehicle
from advloop.sim.scene import SensorPose, assemble_scene, cast_rays
from advloop.sim.suite import bundled_suite


def _timeit(fn, repeat: int) -> float:
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def case_raycast(backend):
    sc = bundled_suite()[7]
    geom = resolve_geometry(sc, None, AssetLibrary.default())
    scene = assemble_scene(sc.snapshot(0), meshes={k: g.mesh for k, g in geom.items()})
    cfg = sc.sdv.sensor
    pose = SensorPose.on_vehicle(sc.sdv.initial[0], sc.sdv.initial[1], sc.sdv.initial[2], cfg)
    c, s = np.cos(pose.heading), np.sin(pose.heading)
    d = cfg.directions()
    dirs = np.ascontiguousarray(np.column_stack([c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1], d[:, 2]]))
    origin = (pose.x, pose.y, pose.z)
    return lambda: cast_rays(scene, origin, dirs, cfg.max_range, backend=backend)


def case_sdf(backend):
    mesh = procedural_vehicle("sedan", 4.5, 1.8, 1.4).transformed(1.0 / 6.5)
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (4096, 3))
    tris = np.ascontiguousarray(mesh.corners())
    return lambda: (backend.point_mesh_distance(pts, tris), backend.winding_number(pts, tris))


def case_hull(backend):
    rng = np.random.default_rng(1)
    clouds = [rng.normal(size=(n, 2)) * (2.0, 0.8) for n in rng.integers(20, 400, 200)]
    return lambda: [backend.min_area_rect(backend.convex_hull_2d(c)) for c in clouds]


CASES = {"raycast_scene (28.8k rays, 9 instances)": case_raycast,
         "sdf distance + winding (4096 pts)": case_sdf,
         "hull + min-area rect (200 clusters)": case_hull}


def _agree(a, b) -> bool:
    if isinstance(a, (tuple, list)):
        return all(_agree(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, float), np.asarray(b, float), atol=1e-9, equal_nan=True)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the fallback is available")
    results = []
    for name, make in CASES.items():
        row = {"case": name}
        outs = {}
        for bname, mod in backends.items():
            fn = make(mod)
            outs[bname] = fn()
            row[bname] = _timeit(fn, args.repeat)
        if len(outs) == 2:
            row["agree"] = _agree(outs["cython"], outs["python"])
            row["speedup"] = row["python"] / row["cython"]
        results.append(row)
        print(f"{name:42s} " + "  ".join(f"{b}={row[b] * 1e3:9.2f} ms" for b in backends)
              + (f"  x{row['speedup']:.1f} agree={row['agree']}" if "speedup" in row else ""))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
