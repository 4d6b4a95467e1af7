"""Compare the compiled and numpy kernels on the operators the solvers use.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the best-of-N wall time of each backend and the largest relative
difference between their results.
"""
import argparse
import timeit

import numpy as np

from lorentzhom import kernels
from lorentzhom.finescale import assemble_fine
from lorentzhom.perfem import ElasticTensor, assemble_periodic_elasticity
from lorentzhom.unitcell import FieldSpec, build_geometry, sample_field


def example_cell(n):
    geom = build_geometry({"shape": "cube", "center": [0.5, 0.5, 0.5], "size": 0.5, "n": n})
    spec = FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": "4",
                                  "support": "inclusion"})
    return geom, sample_field(spec, geom)


def cases(rng):
    A = ElasticTensor.isotropic(1.0, 1.0)
    geom, fld = example_cell(8)
    fine = assemble_fine(geom, fld, A, A, 0.125)
    x = rng.standard_normal(fine.operator.ndof)
    yield "fine operator, eps=1/8 (1 rhs)", fine.operator, x

    geom32, _ = example_cell(32)
    op, _, _ = assemble_periodic_elasticity(A, geom32)
    yield "cell operator, n=32 (6 rhs)", op, rng.standard_normal((op.ndof, 6))


def time_apply(op, x, backend, repeat):
    xp = np.zeros((op.ndof + 1,) + x.shape[1:])
    xp[:op.ndof] = x

    def run():
        return kernels.apply_elements(xp, op._pdofs, op.etype, op.ke, backend=backend)
    best = min(timeit.repeat(run, number=1, repeat=repeat))
    return best, run()


def rotation_data(n, rng):
    v = rng.standard_normal((n, 3))
    axis = rng.standard_normal((n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    theta = rng.uniform(-3, 3, n)
    return v, axis, np.cos(theta), np.sin(theta)


def time_rotate(data, backend, repeat):
    v, axis, c, s = data

    def run():
        return kernels.rotate_nodes(v.copy(), axis, c, s, backend=backend)
    best = min(timeit.repeat(run, number=1, repeat=repeat))
    return best, run()


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled extension not available; build it with `python3 setup.py build_ext --inplace`")
        return 1
    rng = np.random.default_rng(args.seed)
    rows = []
    for name, op, x in cases(rng):
        tc, yc = time_apply(op, x, "cython", args.repeat)
        tn, yn = time_apply(op, x, "numpy", args.repeat)
        rows.append((name, tc, tn, np.abs(yc - yn).max() / np.abs(yn).max()))
    n = 250047
    data = rotation_data(n, rng)
    tc, yc = time_rotate(data, "cython", args.repeat)
    tn, yn = time_rotate(data, "numpy", args.repeat)
    rows.append((f"rotation, {n} nodes", tc, tn, np.abs(yc - yn).max() / np.abs(yn).max()))

    print(f"{'kernel':36s} {'cython [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, tc, tn, diff in rows:
        print(f"{name:36s} {tc:11.4f} {tn:11.4f} {tn / tc:8.1f} {diff:13.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
