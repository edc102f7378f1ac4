"""Time the compiled and numpy MLP training kernels on the 10-class benchmark.

Usage: python3 benchmarks/bench_mlp.py [--repeats 5] [--epochs 200]
"""

import argparse
import json
import time

import numpy as np

from labelnoise import _core, learner
from labelnoise.learner import TrainConfig
from labelnoise.mixture import make_benchmark_mixture, sample


def time_backend(backend, data, cfg, repeats):
    times = []
    params = None
    for _ in range(repeats):
        start = time.perf_counter()
        params = learner.train(data, cfg, "true", backend=backend)
        times.append(time.perf_counter() - start)
    return float(np.median(times)), params


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    parser.add_argument("--n-per-class", type=int, default=100)
    args = parser.parse_args(argv)

    data = sample(make_benchmark_mixture(10, 2, 2.0, 0), args.n_per_class, 0)
    cfg = TrainConfig(seed=0, epochs=args.epochs)
    backends = ["python"] + (["compiled"] if _core.compiled_train_epochs is not None else [])
    results = {}
    trained = {}
    for backend in backends:
        results[backend], trained[backend] = time_backend(backend, data, cfg, args.repeats)
    report = {"n": len(data), "epochs": args.epochs, "median_seconds": results}
    if "compiled" in results:
        report["speedup"] = results["python"] / results["compiled"]
        report["max_param_diff"] = max(
            float(np.max(np.abs(a - b)))
            for a, b in zip(trained["python"].as_list(), trained["compiled"].as_list())
        )
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
