"""Command line entry point: ``eygep gen|run|verify``."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import EyGepError
from .experiment import METHODS, TASKS, RunConfig, run
from .matfile import write_matrix
from .rng import make_rng
from .synthetic import gen_augmented, gen_gaussian, random_gep
from .verify import SUITES


def _floats(s):
    return tuple(float(x) for x in s.split(",")) if s else None


def _ints(s):
    return tuple(int(x) for x in s.split(",")) if s else ()


def build_parser():
    p = argparse.ArgumentParser(prog="eygep", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write synthetic data as GEPM matrix files")
    g.add_argument("kind", choices=("gaussian", "augmented", "gep"))
    g.add_argument("--dims", type=_ints, default=(10, 10), help="comma-separated view widths")
    g.add_argument("--k-signal", type=int, default=None)
    g.add_argument("--rho", type=_floats, default=None, help="comma-separated canonical correlations")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--d", type=int, default=10, help="width for augmented / gep data")
    g.add_argument("--k", type=int, default=3, help="signal size for gep data")
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="train on data files and write metrics.csv plus weights")
    r.add_argument("--method", choices=METHODS, default="ey")
    r.add_argument("--task", choices=TASKS, default="cca")
    r.add_argument("--k", type=int, default=1)
    r.add_argument("--alpha", type=_floats, default=None, help="one value or one per view")
    r.add_argument("--batch-size", type=int, default=None)
    r.add_argument("--lr", type=float, default=1e-2)
    r.add_argument("--optimizer", choices=("sgd", "momentum", "adam"), default="sgd")
    r.add_argument("--steps", type=int, default=None)
    r.add_argument("--epochs", type=int, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--jitter", type=float, default=0.0)
    r.add_argument("--in", dest="inputs", nargs="+", required=True)
    r.add_argument("--val", dest="val_inputs", nargs="*", default=())
    r.add_argument("--out", required=True)
    r.add_argument("--hidden", type=_ints, default=(), help="hidden widths for --task deep")
    r.add_argument("--beta", type=float, default=1.0, help="covariance penalty for vicreg / bt")
    r.add_argument("--tied", action="store_true", help="share one network across views (deep)")
    r.add_argument("--iid", action="store_true", help="resample batches with replacement")

    v = sub.add_parser("verify", help="run a property suite and print PASS/FAIL lines")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--seed", type=int, default=0)
    return p


def cmd_gen(args):
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "gaussian":
        rho = args.rho if args.rho is not None else (0.9, 0.5)
        k = args.k_signal if args.k_signal is not None else len(rho)
        inst = gen_gaussian(args.dims, k, rho, args.n, args.seed)
        for i, x in enumerate(inst.batch.views):
            write_matrix(os.path.join(args.out, f"view_{i}.gepm"), x)
        write_matrix(os.path.join(args.out, "rho.gepm"), inst.rho[None, :])
        write_matrix(os.path.join(args.out, "population_cov.gepm"), inst.population_cov)
    elif args.kind == "augmented":
        inst = gen_augmented(args.d, args.n, args.noise, args.seed)
        for i, x in enumerate(inst.batch.views):
            write_matrix(os.path.join(args.out, f"view_{i}.gepm"), x)
        write_matrix(os.path.join(args.out, "rho.gepm"), inst.rho[None, :])
    else:
        pair, lam = random_gep(args.d, args.k, make_rng(args.seed))
        write_matrix(os.path.join(args.out, "A.gepm"), pair.A)
        write_matrix(os.path.join(args.out, "B.gepm"), pair.B)
        write_matrix(os.path.join(args.out, "spectrum.gepm"), lam[None, :])
    print(f"wrote {args.kind} data to {args.out}")
    return 0


def cmd_run(args):
    cfg = RunConfig(
        method=args.method, task=args.task, k=args.k, alpha=args.alpha, batch_size=args.batch_size,
        lr=args.lr, optimizer=args.optimizer, steps=args.steps, epochs=args.epochs, seed=args.seed,
        jitter=args.jitter, inputs=tuple(args.inputs), val_inputs=tuple(args.val_inputs or ()),
        out=args.out, hidden=args.hidden, beta=args.beta, iid=args.iid, extra={"tied": args.tied},
    )
    summary = run(cfg)
    print(" ".join(f"{k}={v:.6g}" for k, v in summary.items()))
    return 0


def cmd_verify(args):
    results = SUITES[args.suite](seed=args.seed)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += not ok
    print(f"{args.suite}: {len(results) - failed}/{len(results)} passed")
    return 0 if failed == 0 else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    np.seterr(over="ignore", invalid="ignore")
    try:
        return {"gen": cmd_gen, "run": cmd_run, "verify": cmd_verify}[args.command](args)
    except (EyGepError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
