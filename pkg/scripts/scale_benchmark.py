"""Scale smoke test: n=10,000, p=50 (1,225 interaction blocks), 20 x 20 grid.

Reports wall time and peak resident memory.
Usage: python scripts/scale_benchmark.py [--n 10000] [--p 50] [--grid 20 20] [--threads 1]
"""

import argparse
import resource
import sys
import time

from sparse_am import build_blocks, build_grid, fit_path, select_model, split, standardize
from sparse_am.block_cd import FitOptions
from sparse_am.synthetic import make_additive_data


def peak_rss_gb() -> float:
    kb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return kb / (1 << 20) if sys.platform != "darwin" else kb / (1 << 30)


def run(n=10_000, p=50, L=20, M=20, threads=1, seed=0, verbose=True):
    t0 = time.perf_counter()
    data = make_additive_data(n, p, seed=seed)
    # the whole sample is used for training; validation is a fresh draw
    val = make_additive_data(n // 10, p, seed=seed + 1)
    scaler, train_z = standardize(data)
    blocks = build_blocks(train_z, standardizer=scaler)
    y = train_z.y - train_z.y.mean()
    options = FitOptions()
    grid = build_grid(blocks, y, L, M, options=options)
    done = [0]

    def progress(l, m):
        done[0] += 1
        if verbose and done[0] % 20 == 0:
            print(f"  {done[0]}/{L * M} nodes, {time.perf_counter() - t0:.0f} s, "
                  f"peak {peak_rss_gb():.2f} GB", flush=True)

    fit_path(grid, blocks, y, options, validation=val, threads=threads, progress=progress)
    l, m, model = select_model(grid, val)
    elapsed = time.perf_counter() - t0
    return {
        "seconds": elapsed,
        "peak_gb": peak_rss_gb(),
        "nodes": len(grid.node_models),
        "failures": len(grid.failures),
        "selected": (l, m),
        "support": sorted(b.label() for b in model.support),
        "n_blocks": len(blocks),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--p", type=int, default=50)
    ap.add_argument("--grid", type=int, nargs=2, default=(20, 20))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    out = run(args.n, args.p, *args.grid, threads=args.threads)
    for key, value in out.items():
        print(f"{key}: {value}")


if __name__ == "__main__":
    main()
