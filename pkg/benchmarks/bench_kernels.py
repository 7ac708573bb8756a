"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --size 128 --repeat 20

Each row runs one kernel on the same inputs under both backends, checks the
outputs agree and reports the median wall time per call.
"""
import argparse
import statistics
import time

import numpy as np

from siltopo import _backend
from siltopo.bench import sample_params
from siltopo.body import capsules
from siltopo.fitting import FitConfig, Target, fit, fit_terms


def _median_time(fn, repeat):
    fn()  # warm-up
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def _cases(size, rng):
    canvas = (size, size)
    p = sample_params(rng)
    segs = capsules(p, canvas)
    k = _backend.BACKENDS["python"]
    mask = k.capsule_mask(segs, size, size)
    dist = k.erosion_distance(mask, 0)
    target = k.capsule_mask(capsules(sample_params(rng), canvas), size, size)
    v = p.to_vector()
    return [
        ("erosion_distance", lambda k: k.erosion_distance(mask, 0)),
        ("outward_distance", lambda k: k.outward_distance(mask)),
        ("ridge", lambda k: k.ridge(dist, mask)),
        ("capsule_mask", lambda k: k.capsule_mask(segs, size, size)),
        ("capsule_sdf", lambda k: k.capsule_sdf(segs, size, size)),
        ("fit_terms", lambda k: fit_terms(v, Target(target), FitConfig()).total),
        ("fit (10 iters)", lambda k: fit(target, p, FitConfig(max_iters=10)).trace[-1].total),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128, help="square canvas side")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if "cython" not in _backend.BACKENDS:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(args.seed)
    saved = _backend.kernels
    print(f"canvas {args.size}x{args.size}, median of {args.repeat}")
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    try:
        for name, fn in _cases(args.size, rng):
            out, times = {}, {}
            reps = max(1, args.repeat // 10) if name.startswith("fit (") else args.repeat
            for b in ("python", "cython"):
                _backend.kernels = _backend.BACKENDS[b]
                out[b] = fn(_backend.kernels)
                times[b] = _median_time(lambda: fn(_backend.kernels), reps)
            a, c = out["python"], out["cython"]
            same = np.allclose(a, c, atol=1e-9) if np.asarray(a).dtype.kind == "f" else np.array_equal(a, c)
            if not same:
                raise SystemExit(f"{name}: backends disagree")
            print(f"{name:<18}{times['python'] * 1e3:>12.3f}{times['cython'] * 1e3:>12.3f}"
                  f"{times['python'] / times['cython']:>9.1f}x")
    finally:
        _backend.kernels = saved


if __name__ == "__main__":
    main()
