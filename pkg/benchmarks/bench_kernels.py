"""Wall-clock comparison of the compiled and pure-Python propagation kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import time

import numpy as np

from pseudospin import core, kernels, semiclassical as sc


def fid_case(params, amplitude):
    drive = sc.DriveEnvelope.rectangular(amplitude)
    return sc.FidExperiment(params, drive, 30e-6, sc.default_output_dt(params))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    params = core.preset("paper-2016")
    amp = sc.calibrate_drive(params, math.pi / 2)
    exp = fid_case(params, amp)
    backends = ["python"] + (["compiled"] if kernels._compiled is not None else [])
    results = {}
    for name in backends:
        dt, trace = best_of(lambda: sc.run_fid(exp, backend=name), args.repeat)
        results[name] = (dt, trace)
        print(f"{name:>9}: {dt * 1e3:9.2f} ms  ({trace.metadata['n_steps']} steps)")
    if len(results) == 2:
        a = results["python"][1].a
        b = results["compiled"][1].a
        diff = np.max(np.abs(a - b)) / np.max(np.abs(a))
        print(f"  speedup: {results['python'][0] / results['compiled'][0]:.1f}x")
        print(f"  max relative difference in a(t): {diff:.2e}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
