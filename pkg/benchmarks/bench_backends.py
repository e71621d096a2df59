"""Compare the numba and pure-numpy backends on the hot loops.

Each backend runs in its own interpreter because the switch is read once at
import time::

    python3 benchmarks/bench_backends.py [--repeat 3] [--n 512]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from resolvent_kit import _accel
from resolvent_kit.families import Generator, make_family, volterra_residual
from resolvent_kit.kernels import Grid
from resolvent_kit.special import ml

n, repeat = int(sys.argv[1]), int(sys.argv[2])
gen = Generator.dense([[-1.0, 0.3], [0.2, -2.0]])
z = np.linspace(-2.5, 2.5, 200000) + 0.5j  # stays in the double-precision series regime

def families():
    fam = make_family("frac(0.5,0)", gen, Grid(2.0, n))
    return volterra_residual(fam, tol=1e-3).max

def series():
    return complex(np.sum(ml(0.5, 1.0, z)))

out = {"backend": _accel.backend()}
for name, fn in (("volterra", families), ("ml_series", series)):
    fn()  # warm-up (jit compilation, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - t0)
    out[name] = {"best": min(times), "value": repr(value)}
print(json.dumps(out))
"""


def run_backend(flag: str, n: int, repeat: int) -> dict:
    env = dict(os.environ, RESOLVENT_KIT_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKLOAD, str(n), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=512, help="grid points for the Volterra workload")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    results = [run_backend(flag, args.n, args.repeat) for flag in ("1", "0")]
    print(f"{'workload':<10}  {'backend':<7}  {'best (s)':>9}  value")
    for name in ("volterra", "ml_series"):
        for r in results:
            print(f"{name:<10}  {r['backend']:<7}  {r[name]['best']:>9.4f}  {r[name]['value']}")
    fast, slow = results
    for name in ("volterra", "ml_series"):
        print(f"speedup {name}: {slow[name]['best'] / fast[name]['best']:.1f}x")


if __name__ == "__main__":
    main()
