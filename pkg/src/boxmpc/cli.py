"""Command line entry points: benchmark studies, predictor training, and
single-problem solves over the NPZ file formats."""

import argparse
import sys

import numpy as np

from . import bench, matio
from .adapter import desoften, soften
from .bench import BenchConfig, Experiment
from .boxqp import SolverConfig, solve, warm_start
from .kdv import train_model


def _int_list(text):
    dims = tuple(int(tok) for tok in text.split(",") if tok.strip())
    if not dims:
        raise argparse.ArgumentTypeError("expected a comma-separated list of ints")
    return dims


def _add_common(parser, eps=1e-6):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--eps", type=float, default=eps,
                        help="duality-gap tolerance")
    parser.add_argument("--out", default="bench_out",
                        help="output directory for CSV/NPZ artifacts")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="boxmpc",
        description="Box-constrained QP interior-point solver with a lifted "
                    "predictive-control pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    bench_p = sub.add_parser("bench", help="run a benchmark study")
    bench_sub = bench_p.add_subparsers(dest="experiment", required=True)

    rb = bench_sub.add_parser("random-boxqp",
                              help="iteration counts on random ill-conditioned QPs")
    rb.add_argument("--dims", type=_int_list, default=(100, 500, 1000, 2000))
    rb.add_argument("--repeats", type=int, default=100)
    rb.add_argument("--cond", type=float, default=1e6)
    rb.add_argument("--workers", type=int, default=1)
    _add_common(rb)
    rb.set_defaults(func=_cmd_bench_random)

    kv = bench_sub.add_parser("kdv",
                              help="closed-loop PDE study: train, run, time backends")
    kv.add_argument("--duration", type=float, default=50.0)
    kv.add_argument("--traj", type=int, default=1000)
    kv.add_argument("--samples", type=int, default=200)
    kv.add_argument("--rbf", type=int, default=200)
    kv.add_argument("--rho", type=float, default=100.0)
    kv.add_argument("--horizon", type=int, default=10)
    kv.add_argument("--model", default=None,
                    help="load a trained predictor instead of fitting one")
    start = kv.add_mutually_exclusive_group()
    start.add_argument("--warm", action="store_true",
                       help="warm-started run only")
    start.add_argument("--cold", action="store_true",
                       help="cold-started run only")
    _add_common(kv)
    kv.set_defaults(func=_cmd_bench_kdv)

    gq = bench_sub.add_parser("general-qp",
                              help="soften-and-solve sweep over tall general QPs")
    gq.add_argument("--dims", type=_int_list, default=(10, 25, 50),
                    help="decision dimensions n_x")
    gq.add_argument("--multipliers", type=_int_list, default=(20, 40),
                    help="row counts as multiples of n_x")
    gq.add_argument("--repeats", type=int, default=100)
    gq.add_argument("--rho", type=float, default=1e6,
                    help="penalty weight used by soften()")
    _add_common(gq)
    gq.set_defaults(func=_cmd_bench_generalqp)

    bk = bench_sub.add_parser("backends",
                              help="compiled vs pure-python kernel cores")
    bk.add_argument("--dims", type=_int_list, default=(200, 1000))
    bk.add_argument("--repeats", type=int, default=20)
    bk.add_argument("--cond", type=float, default=1e4)
    _add_common(bk)
    bk.set_defaults(func=_cmd_bench_backends)

    tk = sub.add_parser("train-koopman",
                        help="generate PDE snapshots and fit the lifted predictor")
    tk.add_argument("--seed", type=int, default=0)
    tk.add_argument("--traj", type=int, default=1000)
    tk.add_argument("--samples", type=int, default=200)
    tk.add_argument("--rbf", type=int, default=200)
    tk.add_argument("--dt", type=float, default=0.01)
    tk.add_argument("--out", default="koopman_model.npz")
    tk.add_argument("--data", default=None,
                    help="also save the snapshot dataset here")
    tk.set_defaults(func=_cmd_train)

    sv = sub.add_parser("solve", help="solve one problem file")
    sv.add_argument("problem", help="NPZ problem file (box QP or general QP)")
    sv.add_argument("--eps", type=float, default=1e-6)
    sv.add_argument("--max-iters", type=int, default=100)
    sv.add_argument("--backend", choices=("auto", "dense", "structured"),
                    default="auto")
    sv.add_argument("--core", choices=("auto", "compiled", "python"),
                    default="auto")
    sv.add_argument("--rho", type=float, default=1e6,
                    help="penalty weight when the input is a general QP")
    start = sv.add_mutually_exclusive_group()
    start.add_argument("--warm", metavar="FILE",
                       help="NPZ with member 'z' to warm start from")
    start.add_argument("--cold", action="store_true",
                       help="cold start (default)")
    sv.add_argument("--trace", action="store_true",
                    help="print the per-iteration duality measure")
    sv.add_argument("--out", default=None, help="write the solution NPZ here")
    sv.set_defaults(func=_cmd_solve)

    return parser


def _cmd_bench_random(args):
    config = BenchConfig(experiment=Experiment.RANDOM_BOXQP, dims=args.dims,
                         repeats=args.repeats, cond_number=args.cond,
                         seed=args.seed, output_dir=args.out,
                         epsilon=args.eps, workers=args.workers)
    summary = bench.run_iteration_study(config)
    print(f"{'n':>6} {'variant':>11} {'min':>4} {'median':>7} {'max':>4} "
          f"{'mean':>8} {'failures':>9}")
    for (n, variant), s in summary.items():
        print(f"{n:>6} {variant:>11} {s['min']:>4} {s['median']:>7} "
              f"{s['max']:>4} {s['mean']:>8.2f} {s['failures']:>9}")
    print(f"artifacts written to {args.out}/")
    return 0


def _cmd_bench_kdv(args):
    if args.warm:
        modes = ("warm",)
    elif args.cold:
        modes = ("cold",)
    else:
        modes = ("cold", "warm")
    config = BenchConfig(experiment=Experiment.KDV_PIPELINE, seed=args.seed,
                         output_dir=args.out, epsilon=args.eps,
                         duration=args.duration, n_traj=args.traj,
                         n_samples=args.samples, n_rbf=args.rbf,
                         rho=args.rho, horizon=args.horizon, modes=modes,
                         model_path=args.model)
    logs, timing = bench.run_kdv_study(config)
    for mode, log in logs.items():
        print(f"{mode}: mean iterations {log.iterations.mean():.2f}, "
              f"median solve time {np.median(log.solve_time) * 1e3:.2f} ms, "
              f"mean tracking rmse {log.tracking_rmse.mean():.4f}")
    ratio = timing["structured"]["median"] / timing["dense"]["median"]
    print(f"newton step: structured {timing['structured']['median'] * 1e3:.2f} ms "
          f"(dim {timing['structured']['factor_dim']}), "
          f"dense {timing['dense']['median'] * 1e3:.2f} ms "
          f"(dim {timing['dense']['factor_dim']}), ratio {ratio:.3f}")
    print(f"artifacts written to {args.out}/")
    return 0


def _cmd_bench_generalqp(args):
    config = BenchConfig(experiment=Experiment.GENERAL_QP_SWEEP,
                         dims=args.dims, row_multipliers=args.multipliers,
                         repeats=args.repeats, seed=args.seed,
                         output_dir=args.out, epsilon=args.eps,
                         soft_rho=args.rho)
    stats = bench.run_generalqp_sweep(config)
    print(f"{'n_x':>5} {'n_y':>6} {'med_iters':>9} {'max_violation':>14} "
          f"{'median_s':>10}")
    for (n_x, mult), s in stats.items():
        print(f"{n_x:>5} {mult * n_x:>6} {s['median_iterations']:>9} "
              f"{s['max_violation']:>14.3e} {s['median_seconds']:>10.4e}")
    print(f"artifacts written to {args.out}/")
    return 0


def _cmd_bench_backends(args):
    report = bench.run_core_benchmark(dims=args.dims, repeats=args.repeats,
                                      cond=args.cond, seed=args.seed,
                                      epsilon=args.eps, output_dir=args.out)
    print(f"{'n':>6} {'core':>9} {'iterations':>10} {'median_s':>10}")
    for (n, core), s in report.items():
        print(f"{n:>6} {core:>9} {s['iterations']:>10} {s['median']:>10.4e}")
    print(f"artifacts written to {args.out}/")
    return 0


def _cmd_train(args):
    model, dataset, manifest = train_model(args.seed, n_traj=args.traj,
                                           n_samples=args.samples,
                                           n_rbf=args.rbf, dt=args.dt)
    matio.save_model(args.out, model, meta=manifest)
    if args.data:
        matio.save_dataset(args.data, dataset, manifest)
        print(f"dataset written to {args.data}")
    print(f"model written to {args.out}")
    print(f"lift size {model.n_psi}, fit residual {model.fit_residual:.6e}, "
          f"data checksum {model.data_checksum[:16]}")
    if model.rank_deficient:
        print("warning: normal equations were rank deficient; "
              "minimum-norm solution taken")
    return 0


def _problem_kind(path):
    with np.load(path, allow_pickle=False) as archive:
        names = set(archive.files)
    if "Q" in names and "A" in names:
        return "general"
    if "hessian" in names or "F" in names:
        return "boxqp"
    raise SystemExit(f"unrecognized problem file: {path} (members {sorted(names)})")


def _cmd_solve(args):
    config = SolverConfig(epsilon=args.eps, max_iters=args.max_iters,
                          backend=args.backend, core=args.core)
    kind = _problem_kind(args.problem)
    if kind == "general":
        qp, _ = matio.load_general_qp(args.problem)
        soft = soften(qp, rho=args.rho)
        result = solve(soft.problem, config=config)
        x, y, violation = desoften(result, soft)
        worst = float(violation.max()) if violation.size else 0.0
        print(f"status {result.status.value}, {result.iterations} iterations, "
              f"final gap {result.final_mu:.3e}")
        print(f"objective {qp.objective(x):.10e}, max violation {worst:.3e}")
        if args.out:
            matio._write(args.out, {
                "kind": "general_qp_solution", "status": result.status.value,
                "iterations": result.iterations, "max_violation": worst,
            }, x=x, y=y, violation=violation)
            print(f"solution written to {args.out}")
    else:
        problem, _ = matio.load_problem(args.problem)
        init = None
        if args.warm:
            with np.load(args.warm, allow_pickle=False) as archive:
                guess = archive["z"]
            init = warm_start(problem, guess)
        result = solve(problem, init=init, config=config)
        if args.trace:
            for record in result.trace:
                print(f"iter {record.index:>3}  mu {record.mu:.6e}  "
                      f"sigma {record.sigma:.4f}  alpha {record.alpha:.4f}")
        print(f"status {result.status.value}, {result.iterations} iterations, "
              f"final gap {result.final_mu:.3e}")
        print(f"objective {problem.objective(result.z_star):.10e}")
        if args.out:
            matio._write(args.out, {
                "kind": "boxqp_solution", "status": result.status.value,
                "iterations": result.iterations, "final_mu": result.final_mu,
            }, z=result.z_star, per_iteration_mu=result.per_iteration_mu)
            print(f"solution written to {args.out}")
    return 0 if result.converged else 2


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
