"""Benchmark studies: random ill-conditioned BoxQPs, the KdV pipeline, and
the general-QP adapter sweep, each emitting CSV artifacts with a manifest
header (config hash, seed, library versions) sufficient to re-run them.

Timing methodology: monotonic clock, one warm-up solve excluded, median
reported alongside mean.  Iteration-count artifacts carry no wall times, so
they are bit-reproducible across machines; timing artifacts are labeled as
such.
"""

import dataclasses
import enum
import hashlib
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy

from . import kernels, matio
from .adapter import GeneralQp, desoften, soften
from .boxqp import (BoxQpProblem, DenseNewtonBackend, SolverConfig,
                    StructuredNewtonBackend, cold_start, solve)
from .kdv import ClosedLoopConfig, DEFAULT_REFERENCE, run_closed_loop, train_model
from .koopman import build_prediction_matrices
from .mpc import MpcBoxQpBuilder, MpcReferences, MpcWeights


class Experiment(enum.Enum):
    RANDOM_BOXQP = "random_boxqp"
    KDV_PIPELINE = "kdv_pipeline"
    GENERAL_QP_SWEEP = "general_qp_sweep"


@dataclasses.dataclass
class BenchConfig:
    experiment: Experiment
    dims: tuple = (100, 500, 1000, 2000)
    repeats: int = 100
    cond_number: float = 1e6
    seed: int = 0
    output_dir: str = "bench_out"
    epsilon: float = 1e-6
    workers: int = 1
    # KdV pipeline knobs
    duration: float = 50.0
    n_traj: int = 1000
    n_samples: int = 200
    n_rbf: int = 200
    rho: float = 100.0
    horizon: int = 10
    wdu: float = 0.01
    reference: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_REFERENCE))
    modes: tuple = ("cold", "warm")
    model_path: str | None = None
    # general-QP sweep knobs
    row_multipliers: tuple = (20, 40)
    soft_rho: float = 1e6

    def __post_init__(self):
        if any(int(d) <= 0 for d in self.dims):
            raise ValueError("dims must be positive")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")

    def as_manifest(self):
        payload = dataclasses.asdict(self)
        payload["experiment"] = self.experiment.value
        return payload


def _versions():
    import boxmpc
    return (f"python {sys.version.split()[0]}; numpy {np.__version__}; "
            f"scipy {scipy.__version__}; boxmpc {boxmpc.__version__}; "
            f"kernels {kernels.default_core()}")


def write_csv(path, columns, rows, manifest):
    """CSV with '#'-prefixed manifest lines before the header row."""
    blob = json.dumps(manifest, sort_keys=True, default=str)
    digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
    with open(path, "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write(f"# seed={manifest.get('seed')}\n")
        fh.write(f"# versions={_versions()}\n")
        fh.write(f"# config={blob}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    return path


def gen_random_boxqp(n, cond, seed, validate=False, linear_scale=100.0):
    """Random BoxQP with an exactly log-spaced Hessian spectrum.

    H = Q diag(lambda) Q' with Q drawn Haar-like from the QR factorization
    of a Gaussian matrix (R's diagonal signs fixed so the draw is unique)
    and lambda log-spaced from 1 to cond; h is Gaussian with standard
    deviation linear_scale.  The scale matters: since the smallest
    eigenvalue is 1, a unit-scale h leaves the unconstrained minimizer
    inside the box and every instance degenerates to an equality-free
    Newton solve.  At scale 100 roughly a third of the bounds are active,
    which is the regime the iteration study is about (it also matches the
    penalty-weighted linear terms the MPC pipeline produces).  The spectrum
    is known by construction, so validation is skippable in bulk
    generation.
    """
    if cond < 1:
        raise ValueError("cond must be at least 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))
    lam = np.logspace(0.0, np.log10(cond), n)
    H = (Q * lam) @ Q.T
    H = 0.5 * (H + H.T)
    h = linear_scale * rng.standard_normal(n)
    return BoxQpProblem(H, h, validate=validate)


def _iteration_instance(args):
    """One instance of the iteration study: both variants, same problem."""
    n, cond, entropy, epsilon = args
    seed = np.random.SeedSequence(entropy)
    problem = gen_random_boxqp(n, cond, seed)
    out = []
    for variant, infeasible in (("feasible", False), ("infeasible", True)):
        try:
            result = solve(problem, config=SolverConfig(
                epsilon=epsilon, infeasible_variant=infeasible))
            out.append((variant, result.iterations, result.status.value))
        except Exception as exc:  # recorded, study continues
            out.append((variant, -1, f"error:{type(exc).__name__}"))
    return out


def run_iteration_study(config):
    """Feasible vs infeasible iteration counts over random BoxQPs.

    Emits a raw per-instance CSV and a min/median/max/mean summary per
    (n, variant).  Instances are parameterized by (seed, n, index) so a
    worker pool changes nothing but wall time.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    manifest = config.as_manifest()
    tasks = [(int(n), config.cond_number, (config.seed, int(n), i), config.epsilon)
             for n in config.dims for i in range(config.repeats)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_iteration_instance, tasks, chunksize=1))
    else:
        results = [_iteration_instance(t) for t in tasks]

    raw_rows = []
    counts = {}
    for (n, _, entropy, _), variants in zip(tasks, results):
        idx = entropy[2]
        for variant, iters, status in variants:
            raw_rows.append((n, variant, idx, iters, status))
            if iters >= 0:
                counts.setdefault((n, variant), []).append(iters)
    summary_rows = []
    summary = {}
    for n in config.dims:
        for variant in ("feasible", "infeasible"):
            iters = counts.get((int(n), variant), [])
            failures = config.repeats - len(iters)
            stats = {
                "min": min(iters) if iters else -1,
                "median": statistics.median(iters) if iters else -1,
                "max": max(iters) if iters else -1,
                "mean": statistics.fmean(iters) if iters else -1,
                "failures": failures,
            }
            summary[(int(n), variant)] = stats
            summary_rows.append((n, variant, stats["min"], stats["median"],
                                 stats["max"], f"{stats['mean']:.4f}", failures))
    write_csv(os.path.join(config.output_dir, "iteration_study_raw.csv"),
              ("n", "variant", "instance", "iterations", "status"),
              raw_rows, manifest)
    write_csv(os.path.join(config.output_dir, "iteration_study.csv"),
              ("n", "variant", "min", "median", "max", "mean", "failures"),
              summary_rows, manifest)
    return summary


def kdv_default_weights(n_x=100, n_u=4, horizon=10, rho=100.0, wdu=0.01):
    """The KdV tracking weights: Wx = I, Wu = 0.05 I, with a small rate term."""
    return MpcWeights(Wx=np.ones(n_x), Wu=np.full(n_u, 0.05),
                      Wdu=np.full(n_u, wdu), rho=rho, N=horizon)


def time_newton_backends(problem, repeats=50):
    """Paired per-iteration timing of the two Newton backends.

    Both backends factor and solve the identical barrier-augmented system
    (the one arising at the problem's cold start), so the comparison
    isolates the linear algebra.  Returns per-backend median/mean seconds
    and the factorization dimension.
    """
    init = cold_start(problem.linear)
    barrier = init.dual_ub / init.slack_ub + init.dual_lb / init.slack_lb
    rhs = -problem.linear
    out = {}
    for name, backend in (("structured", StructuredNewtonBackend(problem.structure)),
                          ("dense", DenseNewtonBackend(problem.dense_hessian()))):
        backend.factor(barrier)  # warm-up excluded
        backend.solve(rhs)
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            backend.factor(barrier)
            backend.solve(rhs)
            samples.append(time.perf_counter() - t0)
        out[name] = {
            "median": statistics.median(samples),
            "mean": statistics.fmean(samples),
            "factor_dim": backend.factor_dim,
        }
    return out


def run_kdv_study(config, model=None):
    """Cold and warm closed-loop runs plus backend timing at n = 1040.

    Trains the predictor from scratch unless a model (or model_path) is
    supplied.  Emits per-mode step CSVs and field files, a summary CSV,
    and the structured-vs-dense timing CSV.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    manifest = config.as_manifest()
    if model is None:
        if config.model_path:
            model = matio.load_model(config.model_path)
        else:
            model, _, train_manifest = train_model(
                config.seed, n_traj=config.n_traj, n_samples=config.n_samples,
                n_rbf=config.n_rbf)
            manifest["training"] = train_manifest
    weights = kdv_default_weights(n_x=model.n_x, n_u=model.n_u,
                                  horizon=config.horizon, rho=config.rho,
                                  wdu=config.wdu)

    logs = {}
    summary_rows = []
    for mode in config.modes:
        loop = ClosedLoopConfig(model=model, weights=weights,
                                duration=config.duration,
                                epsilon=config.epsilon,
                                warm_start=(mode == "warm"),
                                reference=dict(config.reference))
        log = run_closed_loop(loop)
        logs[mode] = log
        log.write_csv(os.path.join(config.output_dir, f"kdv_steps_{mode}.csv"))
        log.save_field(os.path.join(config.output_dir, f"kdv_field_{mode}.npz"))
        summary_rows.append((
            mode,
            f"{log.iterations.mean():.4f}",
            int(np.median(log.iterations)),
            f"{log.solve_time.mean():.6e}",
            f"{np.median(log.solve_time):.6e}",
            f"{log.converged.mean():.4f}",
            f"{log.tracking_rmse.mean():.6f}",
        ))
    write_csv(os.path.join(config.output_dir, "kdv_summary.csv"),
              ("mode", "mean_iterations", "median_iterations",
               "mean_solve_time", "median_solve_time", "converged_fraction",
               "mean_tracking_rmse"),
              summary_rows, manifest)

    pm = build_prediction_matrices(model, weights.N)
    builder = MpcBoxQpBuilder(model, pm, weights)
    instance = builder.build(np.zeros(model.n_x),
                             MpcReferences(x_r=np.zeros(model.n_x),
                                           u_r=np.zeros(model.n_u)))
    timing = time_newton_backends(instance.problem)
    ratio = timing["structured"]["median"] / timing["dense"]["median"]
    write_csv(os.path.join(config.output_dir, "kdv_backend_timing.csv"),
              ("backend", "factor_dim", "median_seconds", "mean_seconds",
               "structured_over_dense"),
              [(name, t["factor_dim"], f"{t['median']:.6e}",
                f"{t['mean']:.6e}", f"{ratio:.4f}")
               for name, t in timing.items()],
              manifest)
    return logs, timing


def gen_random_general_qp(n_x, n_y, seed):
    """Random general QP, strictly feasible by construction.

    An interior point x0 is drawn first and both bound boxes are placed
    around it (and around A x0), so every instance has interior feasible
    points and the softened solution has something exact to approach.
    """
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n_x, n_x))
    Q = G.T @ G / n_x + 0.1 * np.eye(n_x)
    q = rng.standard_normal(n_x)
    A = rng.standard_normal((n_y, n_x)) / np.sqrt(n_x)
    x_center = rng.uniform(-1.0, 1.0, n_x)
    x_half = rng.uniform(0.5, 1.5, n_x)
    x0 = x_center + rng.uniform(-0.5, 0.5, n_x) * x_half
    y0 = A @ x0
    return GeneralQp(
        Q=Q, q=q, A=A,
        y_min=y0 - rng.uniform(0.3, 1.5, n_y),
        y_max=y0 + rng.uniform(0.3, 1.5, n_y),
        x_min=x_center - x_half,
        x_max=x_center + x_half,
    )


def run_generalqp_sweep(config):
    """Soften-and-solve sweep over n_y = multiplier * n_x instances."""
    os.makedirs(config.output_dir, exist_ok=True)
    manifest = config.as_manifest()
    solver_config = SolverConfig(epsilon=config.epsilon)
    raw_rows = []
    stats = {}
    for n_x in config.dims:
        for mult in config.row_multipliers:
            n_y = int(mult) * int(n_x)
            iters, times, violations = [], [], []
            for i in range(config.repeats):
                qp = gen_random_general_qp(
                    int(n_x), n_y, np.random.SeedSequence((config.seed, int(n_x), mult, i)))
                soft = soften(qp, rho=config.soft_rho)
                t0 = time.perf_counter()
                result = solve(soft.problem, config=solver_config)
                dt = time.perf_counter() - t0
                x, _, violation = desoften(result, soft)
                worst = float(violation.max()) if violation.size else 0.0
                raw_rows.append((n_x, n_y, i, result.iterations,
                                 result.status.value, f"{worst:.3e}",
                                 result.diagnostics["factor_dim"], f"{dt:.6e}"))
                iters.append(result.iterations)
                times.append(dt)
                violations.append(worst)
            stats[(int(n_x), mult)] = {
                "median_iterations": statistics.median(iters),
                "max_violation": max(violations),
                "median_seconds": statistics.median(times),
                "mean_seconds": statistics.fmean(times),
            }
    write_csv(os.path.join(config.output_dir, "general_qp_raw.csv"),
              ("n_x", "n_y", "instance", "iterations", "status",
               "max_violation", "factor_dim", "solve_seconds"),
              raw_rows, manifest)
    write_csv(os.path.join(config.output_dir, "general_qp_summary.csv"),
              ("n_x", "n_y", "median_iterations", "max_violation",
               "median_seconds", "mean_seconds"),
              [(nx, mult * nx, s["median_iterations"], f"{s['max_violation']:.3e}",
                f"{s['median_seconds']:.6e}", f"{s['mean_seconds']:.6e}")
               for (nx, mult), s in stats.items()],
              manifest)
    return stats


def run_core_benchmark(dims=(200, 1000), repeats=20, cond=1e4, seed=0,
                       epsilon=1e-6, output_dir="bench_out"):
    """Compiled vs pure-NumPy inner-loop kernels on identical problems.

    Iteration counts must match between cores (same arithmetic, fused
    differently); the CSV records per-core solve-time medians so the
    speedup of the extension is visible on the boxes it matters for.
    """
    os.makedirs(output_dir, exist_ok=True)
    rows = []
    report = {}
    for n in dims:
        problem = gen_random_boxqp(int(n), cond, np.random.SeedSequence((seed, int(n))))
        for core in kernels.available_cores():
            config = SolverConfig(epsilon=epsilon, core=core)
            result = solve(problem, config=config)  # warm-up excluded
            samples = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                result = solve(problem, config=config)
                samples.append(time.perf_counter() - t0)
            med = statistics.median(samples)
            rows.append((n, core, result.iterations, f"{med:.6e}",
                         f"{statistics.fmean(samples):.6e}"))
            report[(int(n), core)] = {"median": med,
                                      "iterations": result.iterations}
    write_csv(os.path.join(output_dir, "core_benchmark.csv"),
              ("n", "core", "iterations", "median_seconds", "mean_seconds"),
              rows, {"seed": seed, "dims": list(dims), "repeats": repeats,
                     "cond": cond, "epsilon": epsilon})
    return report
