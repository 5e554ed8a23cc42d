"""Mehrotra predictor-corrector interior-point solver for box-constrained QPs.

Solves  min_z  0.5 z'Hz + h'z  subject to  -1 <= z <= 1  with H symmetric
positive definite.  The KKT system couples the primal z with multipliers
(dual_ub, dual_lb) and slacks (slack_ub = 1 - z, slack_lb = 1 + z):

    H z + h + dual_ub - dual_lb = 0
    z + slack_ub - 1 = 0
    z - slack_lb + 1 = 0
    dual_ub * slack_ub = 0,  dual_lb * slack_lb = 0,  all four >= 0

The default variant is feasible: initialization satisfies the three equality
rows exactly, every Newton direction keeps them satisfied, and only the
complementarity products are driven to zero.  An infeasible variant (for
benchmark comparison) starts from the all-ones multiplier/slack point and
folds the equality residuals into the Newton right-hand side.

Each iteration reduces the 5n-by-5n Newton system to one n-by-n solve with
the barrier-augmented Hessian Hbar = H + diag(dual_ub/slack_ub +
dual_lb/slack_lb), shared by the predictor and corrector.  Two backends
factorize Hbar: a dense Cholesky, and a Schur-complement elimination for
Hessians with the penalty block structure arising from dynamics-relaxed MPC,
which only factorizes the (input-horizon)-sized block.
"""

import dataclasses
import enum

import numpy as np
import scipy.linalg

from . import kernels


class StopMode(enum.Enum):
    """Termination test on the duality measure mu = complementarity/(2n)."""

    AVERAGE_GAP = "average_gap"        # mu <= epsilon (scale-free, default)
    SIZE_SCALED_GAP = "size_scaled"    # mu <= 2n*epsilon (threshold grows with n)


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"


@dataclasses.dataclass(frozen=True)
class StructuredHessian:
    """2x2 block Hessian  [[rho F'F + M11, -rho F'], [-rho F, rho I + diag(wx)]].

    This is the shape produced by penalizing prediction-model mismatch with
    weight rho: block 1 holds the n1 = N*n_u inputs, block 2 the n2 = N*n_x
    predicted states.  F is the (n2 x n1) multi-step input-to-state map, M11
    the input cost (including rate terms), wx_diag the state cost diagonal.
    """

    rho: float
    F: np.ndarray
    M11: np.ndarray
    wx_diag: np.ndarray

    @property
    def n1(self):
        return self.F.shape[1]

    @property
    def n2(self):
        return self.F.shape[0]

    @property
    def n(self):
        return self.n1 + self.n2

    def validate(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if np.any(self.wx_diag <= 0):
            raise ValueError("wx_diag must be strictly positive")
        if self.M11.shape != (self.n1, self.n1):
            raise ValueError("M11 shape does not match F column count")
        if self.wx_diag.shape != (self.n2,):
            raise ValueError("wx_diag length does not match F row count")
        asym = np.max(np.abs(self.M11 - self.M11.T))
        if asym > 1e-9 * max(1.0, float(np.max(np.abs(self.M11)))):
            raise ValueError("M11 must be symmetric")

    def dense(self):
        """Materialize the full (n1+n2)-square Hessian."""
        n1, n2 = self.n1, self.n2
        H = np.empty((self.n, self.n))
        H[:n1, :n1] = self.rho * (self.F.T @ self.F) + self.M11
        H[:n1, n1:] = -self.rho * self.F.T
        H[n1:, :n1] = -self.rho * self.F
        H[n1:, n1:] = np.diag(self.rho + self.wx_diag)
        return H

    def matvec(self, z, out=None):
        """H @ z without materializing the dense matrix."""
        n1 = self.n1
        if out is None:
            out = np.empty(self.n)
        z1, z2 = z[:n1], z[n1:]
        Fz1 = self.F @ z1
        out[:n1] = self.rho * (self.F.T @ (Fz1 - z2)) + self.M11 @ z1
        out[n1:] = self.rho * (z2 - Fz1) + self.wx_diag * z2
        return out


class BoxQpProblem:
    """Strongly convex QP over the unit box: 0.5 z'Hz + h'z, -1 <= z <= 1.

    The Hessian may be a dense symmetric positive-definite array or a
    StructuredHessian.  Dense input is symmetrized as (H + H')/2; relative
    asymmetry beyond 1e-9 is rejected as caller error.  With validate=True
    (default) positive definiteness is checked eagerly by a trial Cholesky.
    """

    def __init__(self, hessian, linear, validate=True):
        self.linear = np.array(linear, dtype=np.float64).ravel()
        if isinstance(hessian, StructuredHessian):
            self.structure = hessian
            self._dense = None
            if validate:
                hessian.validate()
                # SPD of the full matrix == SPD of both the diagonal state
                # block and the input-block Schur complement
                StructuredNewtonBackend(hessian).factor(np.zeros(hessian.n))
        else:
            hessian = np.array(hessian, dtype=np.float64)
            scale = max(1.0, float(np.max(np.abs(hessian)))) if hessian.size else 1.0
            if hessian.size and float(np.max(np.abs(hessian - hessian.T))) > 1e-9 * scale:
                raise ValueError("Hessian asymmetry exceeds 1e-9 relative tolerance")
            self.structure = None
            self._dense = 0.5 * (hessian + hessian.T)
            if validate and self._dense.size:
                scipy.linalg.cholesky(self._dense, lower=True)
        if self.linear.shape != (self.n,):
            raise ValueError("linear term length does not match Hessian size")

    @property
    def n(self):
        return self.structure.n if self.structure is not None else self._dense.shape[0]

    @property
    def is_structured(self):
        return self.structure is not None

    def dense_hessian(self):
        if self._dense is None:
            self._dense = self.structure.dense()
        return self._dense

    def hessian_matvec(self, z, out=None):
        if self.structure is not None:
            return self.structure.matvec(z, out=out)
        if out is None:
            return self._dense @ z
        return np.matmul(self._dense, z, out=out)

    def objective(self, z):
        return float(0.5 * z @ self.hessian_matvec(z) + self.linear @ z)


@dataclasses.dataclass
class IpmIterate:
    """Primal point, bound multipliers, and bound slacks.

    Feasible iterates keep slack_ub = 1 - z and slack_lb = 1 + z exactly;
    the multipliers satisfy Hz + h + dual_ub - dual_lb = 0.  All four
    nonnegative blocks stay strictly positive until termination.
    """

    z: np.ndarray
    dual_ub: np.ndarray
    dual_lb: np.ndarray
    slack_ub: np.ndarray
    slack_lb: np.ndarray

    @property
    def n(self):
        return self.z.shape[0]

    def copy(self):
        return IpmIterate(self.z.copy(), self.dual_ub.copy(), self.dual_lb.copy(),
                          self.slack_ub.copy(), self.slack_lb.copy())

    def min_positive_entry(self):
        return float(min(self.dual_ub.min(), self.dual_lb.min(),
                         self.slack_ub.min(), self.slack_lb.min()))


@dataclasses.dataclass
class IpmDirection:
    """Newton direction for all five iterate blocks."""

    dz: np.ndarray
    d_dual_ub: np.ndarray
    d_dual_lb: np.ndarray
    d_slack_ub: np.ndarray
    d_slack_lb: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(*(np.zeros(n) for _ in range(5)))


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-6
    max_iters: int = 100
    boundary_fraction: float = 0.99
    stop_mode: StopMode = StopMode.AVERAGE_GAP
    infeasible_variant: bool = False
    backend: str = "auto"          # "auto" | "dense" | "structured"
    core: str = "auto"             # "auto" | "compiled" | "python"
    slack_floor: float = 1e-14     # floor under slacks before division
    diag_lift: float = 1e-10       # relative lift for one factorization retry
    trace_residuals: bool = False  # recompute equality residuals each iteration

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.boundary_fraction < 1.0:
            raise ValueError("boundary_fraction must lie in (0, 1)")


@dataclasses.dataclass(frozen=True)
class IterationRecord:
    """One predictor-corrector iteration of the trace."""

    index: int
    mu: float
    sigma: float
    alpha_aff: float
    alpha: float
    residual_norm: float  # NaN when residual tracing is off


@dataclasses.dataclass
class SolveResult:
    z_star: np.ndarray
    iterations: int
    final_mu: float
    status: SolveStatus
    per_iteration_mu: np.ndarray
    iterate: IpmIterate
    trace: list
    diagnostics: dict

    @property
    def converged(self):
        return self.status is SolveStatus.CONVERGED


def cold_start(h):
    """Strictly feasible start at z = 0 with exact stationarity.

    Splitting the gradient h evenly across the two multiplier vectors around
    the scale s = max(||h||_inf, 1) keeps both strictly positive; the max
    with 1 guards h = 0, where the split alone would give zero multipliers.
    """
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[0]
    s = max(float(np.max(np.abs(h))) if n else 0.0, 1.0)
    return IpmIterate(
        z=np.zeros(n),
        dual_ub=s - 0.5 * h,
        dual_lb=s + 0.5 * h,
        slack_ub=np.ones(n),
        slack_lb=np.ones(n),
    )


def warm_start(problem, z_guess, interior_margin=1e-6):
    """Strictly feasible start at a given primal guess.

    The guess (typically the time-shifted previous MPC solution) is pulled
    interior by interior_margin, since components of the previous solution
    commonly sit exactly on a bound.  Multipliers then split the local
    gradient H z0 + h the same way cold_start splits h, so stationarity
    again holds exactly.
    """
    z_guess = np.asarray(z_guess, dtype=np.float64)
    if np.any(np.abs(z_guess) > 1.0):
        raise ValueError("z_guess must lie in [-1, 1]")
    z0 = np.clip(z_guess, -1.0 + interior_margin, 1.0 - interior_margin)
    grad = problem.hessian_matvec(z0) + problem.linear
    s = max(float(np.max(np.abs(grad))), 1.0)
    return IpmIterate(
        z=z0,
        dual_ub=s - 0.5 * grad,
        dual_lb=s + 0.5 * grad,
        slack_ub=1.0 - z0,
        slack_lb=1.0 + z0,
    )


def infeasible_start(n):
    """All-ones multipliers and slacks at z = 0; equality rows not satisfied."""
    return IpmIterate(np.zeros(n), np.ones(n), np.ones(n), np.ones(n), np.ones(n))


def duality_measure(iterate):
    """Average complementarity (dual_ub.slack_ub + dual_lb.slack_lb)/(2n)."""
    return (float(iterate.dual_ub @ iterate.slack_ub)
            + float(iterate.dual_lb @ iterate.slack_lb)) / (2 * iterate.n)


def equality_residuals(problem, iterate):
    """The three KKT equality rows (stationarity, upper slack, lower slack)."""
    r_stat = (problem.hessian_matvec(iterate.z) + problem.linear
              + iterate.dual_ub - iterate.dual_lb)
    r_ub = iterate.z + iterate.slack_ub - 1.0
    r_lb = iterate.z - iterate.slack_lb + 1.0
    return r_stat, r_ub, r_lb


def step_length(iterate, direction, fraction=0.99):
    """Longest step keeping all nonnegative blocks strictly positive.

    Returns min(1, fraction * t) where t is the exact ratio to the first
    blocking bound; 1 when no direction entry decreases (empty min treated
    as +inf).
    """
    t = np.inf
    for v, dv in ((iterate.dual_ub, direction.d_dual_ub),
                  (iterate.dual_lb, direction.d_dual_lb),
                  (iterate.slack_ub, direction.d_slack_ub),
                  (iterate.slack_lb, direction.d_slack_lb)):
        neg = dv < 0.0
        if np.any(neg):
            t = min(t, float(np.min(v[neg] / -dv[neg])))
    if not np.isfinite(t):
        return 1.0
    return min(1.0, fraction * t)


@dataclasses.dataclass(frozen=True)
class NewtonReduction:
    """Condensed Newton system plus the closure recovering the full direction."""

    barrier_diag: np.ndarray  # add to H to form the reduced matrix
    rhs: np.ndarray
    expand: callable          # dz -> IpmDirection


def newton_reduce(iterate, r1, r2, eq_residuals=None, slack_floor=1e-14):
    """Reduce the 5n Newton system to (H + diag(barrier)) dz = rhs.

    r1, r2 are the complementarity right-hand sides for the upper and lower
    bound pairs.  eq_residuals, when given, are the negated equality-row
    residuals (stationarity, upper slack, lower slack) of the infeasible
    variant; on the feasible path they are identically zero and omitted.

    Eliminating the slack rows gives d_slack_ub = rb - dz and
    d_slack_lb = dz - rc; the complementarity rows then yield the
    multiplier directions, and substituting all four into the stationarity
    row leaves

        (H + diag(du/su + dl/sl)) dz
            = ra + (r2 + dl*rc)/sl - (r1 - du*rb)/su

    Note the sign: the upper-pair contribution enters negatively because
    d_slack_ub moves opposite to dz.
    """
    su = np.maximum(iterate.slack_ub, slack_floor)
    sl = np.maximum(iterate.slack_lb, slack_floor)
    du, dl = iterate.dual_ub, iterate.dual_lb
    barrier = du / su + dl / sl
    if eq_residuals is None:
        ra = rb = rc = None
        rhs = r2 / sl - r1 / su
    else:
        ra, rb, rc = eq_residuals
        rhs = ra + (r2 + dl * rc) / sl - (r1 - du * rb) / su

    def expand(dz):
        d_su = -dz if rb is None else rb - dz
        d_sl = dz.copy() if rc is None else dz - rc
        return IpmDirection(
            dz=dz,
            d_dual_ub=(r1 - du * d_su) / su,
            d_dual_lb=(r2 - dl * d_sl) / sl,
            d_slack_ub=d_su,
            d_slack_lb=d_sl,
        )

    return NewtonReduction(barrier_diag=barrier, rhs=rhs, expand=expand)


class DenseNewtonBackend:
    """Cholesky of H + diag(d), re-factorized once per IPM iteration."""

    def __init__(self, H):
        self._H = np.ascontiguousarray(H, dtype=np.float64)
        self._work = np.empty_like(self._H)
        self.factor_dim = self._H.shape[0]
        self._chol = None

    def factor(self, barrier_diag, lift=0.0):
        n = self.factor_dim
        np.copyto(self._work, self._H)
        diag = self._work.reshape(-1)[:: n + 1]
        diag += barrier_diag
        if lift:
            diag += lift * max(1.0, float(np.max(np.abs(diag))))
        self._chol = scipy.linalg.cho_factor(
            self._work, lower=True, overwrite_a=True, check_finite=False)

    def solve(self, rhs, out=None):
        x = scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
        if out is None:
            return x
        out[:] = x
        return out


class StructuredNewtonBackend:
    """Schur-complement solve of the block system; factorizes only n1-by-n1.

    With Hbar22 = rho + wx + d2 diagonal, eliminating block 2 leaves
    S = rho F'F + M11 + diag(d1) - rho^2 F' diag(1/Hbar22) F, so the only
    factorization is of the small input block, regardless of the state
    dimension.
    """

    def __init__(self, sh):
        self._sh = sh
        self._G = sh.rho * (sh.F.T @ sh.F) + sh.M11
        self._S = np.empty_like(self._G)
        self._F_scaled = np.empty_like(sh.F)
        self._h22 = np.empty(sh.n2)
        self.factor_dim = sh.n1

    def factor(self, barrier_diag, lift=0.0):
        sh = self._sh
        n1 = sh.n1
        d1, d2 = barrier_diag[:n1], barrier_diag[n1:]
        np.add(sh.rho + sh.wx_diag, d2, out=self._h22)
        np.copyto(self._S, self._G)
        diag = self._S.reshape(-1)[:: n1 + 1]
        diag += d1
        if lift:
            scale = lift * max(1.0, float(np.max(np.abs(diag))))
            diag += scale
            self._h22 += scale
        np.divide(sh.F, self._h22[:, None], out=self._F_scaled)
        self._S -= (sh.rho * sh.rho) * (sh.F.T @ self._F_scaled)
        self._chol = scipy.linalg.cho_factor(
            self._S, lower=True, overwrite_a=True, check_finite=False)

    def solve(self, rhs, out=None):
        sh = self._sh
        n1 = sh.n1
        b1, b2 = rhs[:n1], rhs[n1:]
        t = b2 / self._h22
        dz1 = scipy.linalg.cho_solve(
            self._chol, b1 + sh.rho * (sh.F.T @ t), check_finite=False)
        if out is None:
            out = np.empty(sh.n)
        out[:n1] = dz1
        out[n1:] = (b2 + sh.rho * (sh.F @ dz1)) / self._h22
        return out


def solve_reduced_dense(H, barrier_diag, rhs):
    """One-shot dense solve of (H + diag(barrier_diag)) dz = rhs."""
    backend = DenseNewtonBackend(H)
    backend.factor(np.asarray(barrier_diag, dtype=np.float64))
    return backend.solve(np.asarray(rhs, dtype=np.float64))


def solve_reduced_structured(sh, extra_diag_m11, barrier_diag22, rhs):
    """One-shot structured solve; barrier diagonal given per block."""
    backend = StructuredNewtonBackend(sh)
    d = np.concatenate([np.asarray(extra_diag_m11, dtype=np.float64),
                        np.asarray(barrier_diag22, dtype=np.float64)])
    backend.factor(d)
    return backend.solve(np.asarray(rhs, dtype=np.float64))


def make_newton_backend(problem, backend="auto"):
    if backend == "auto":
        backend = "structured" if problem.is_structured else "dense"
    if backend == "dense":
        return DenseNewtonBackend(problem.dense_hessian())
    if backend == "structured":
        if not problem.is_structured:
            raise ValueError("structured backend requires a StructuredHessian")
        return StructuredNewtonBackend(problem.structure)
    raise ValueError(f"unknown backend {backend!r}")


def _stop_threshold(config, n):
    if config.stop_mode is StopMode.AVERAGE_GAP:
        return config.epsilon
    return 2 * n * config.epsilon


def solve(problem, init=None, config=None):
    """Run the predictor-corrector iteration to the configured tolerance.

    init defaults to cold_start (or the all-ones infeasible point when
    config.infeasible_variant); a caller-supplied iterate is copied, not
    mutated.  Exceeding max_iters is reported through status, not raised;
    a factorization failure is retried once with a small diagonal lift and
    then propagated.
    """
    if config is None:
        config = SolverConfig()
    if problem.n == 0:
        # every variable was eliminated upstream; nothing to iterate on
        return SolveResult(
            z_star=np.zeros(0), iterations=0, final_mu=0.0,
            status=SolveStatus.CONVERGED, per_iteration_mu=np.zeros(1),
            iterate=cold_start(problem.linear), trace=[],
            diagnostics={"backend": "dense",
                         "core": (config.core if config.core != "auto"
                                  else kernels.default_core()),
                         "factor_dim": 0, "slack_floor_hits": 0,
                         "diag_lifts": 0, "residual_norm": 0.0})
    if init is None:
        init = (infeasible_start(problem.n) if config.infeasible_variant
                else cold_start(problem.linear))
    kern = kernels.get_kernels(config.core)
    newton = make_newton_backend(problem, config.backend)
    feasible = not config.infeasible_variant
    n = problem.n
    inv2n = 1.0 / (2 * n)
    threshold = _stop_threshold(config, n)
    h = problem.linear
    res_tol = config.epsilon * max(1.0, float(np.max(np.abs(h))))

    it = init.copy()
    z, du, dl = it.z, it.dual_ub, it.dual_lb
    su, sl = it.slack_ub, it.slack_lb
    aff = IpmDirection.zeros(n)
    fin = IpmDirection.zeros(n)
    suf, slf, barrier, r1, r2, rhs, grad = (np.empty(n) for _ in range(7))
    # equality residuals; stay exactly zero on the feasible path
    ra, rb, rc = np.zeros(n), np.zeros(n), np.zeros(n)

    mu_trace = []
    trace = []
    status = SolveStatus.MAX_ITERS
    n_floored = 0
    diag_lifts = 0
    res_norm = np.nan

    for k in range(config.max_iters + 1):
        mu = kern.mu_sum(du, su, dl, sl) * inv2n
        mu_trace.append(mu)
        if not feasible or config.trace_residuals:
            problem.hessian_matvec(z, out=grad)
            grad += h
            res_norm = kern.kkt_residuals(grad, z, du, dl, su, sl, ra, rb, rc)
            if feasible:
                # round-off sized; keep the Newton RHS homogeneous so the
                # direction stays in the equality-feasible subspace
                ra[:] = 0.0
                rb[:] = 0.0
                rc[:] = 0.0
        if mu <= threshold and (feasible or res_norm <= res_tol):
            status = SolveStatus.CONVERGED
            break
        if k == config.max_iters:
            break

        n_floored += kern.barrier_diag(du, dl, su, sl, config.slack_floor,
                                       suf, slf, barrier)
        try:
            newton.factor(barrier)
        except scipy.linalg.LinAlgError:
            newton.factor(barrier, lift=config.diag_lift)
            diag_lifts += 1

        # predictor: pure affine-scaling direction
        kern.predictor_rhs(du, dl, su, sl, r1, r2)
        kern.reduced_rhs(r1, r2, du, dl, suf, slf, ra, rb, rc, rhs)
        newton.solve(rhs, out=aff.dz)
        kern.expand_direction(aff.dz, du, dl, suf, slf, r1, r2, rb, rc,
                              aff.d_dual_ub, aff.d_dual_lb,
                              aff.d_slack_ub, aff.d_slack_lb)
        t = kern.step_ratio(du, aff.d_dual_ub, dl, aff.d_dual_lb,
                            su, aff.d_slack_ub, sl, aff.d_slack_lb)
        alpha_aff = min(1.0, config.boundary_fraction * t)
        mu_aff = kern.mu_after(alpha_aff, du, aff.d_dual_ub, dl, aff.d_dual_lb,
                               su, aff.d_slack_ub, sl, aff.d_slack_lb) * inv2n
        sigma = (max(mu_aff, 0.0) / mu) ** 3

        # corrector: centering plus second-order correction, same factorization
        kern.corrector_rhs(du, dl, su, sl,
                           aff.d_dual_ub, aff.d_dual_lb,
                           aff.d_slack_ub, aff.d_slack_lb,
                           sigma * mu, r1, r2)
        kern.reduced_rhs(r1, r2, du, dl, suf, slf, ra, rb, rc, rhs)
        newton.solve(rhs, out=fin.dz)
        kern.expand_direction(fin.dz, du, dl, suf, slf, r1, r2, rb, rc,
                              fin.d_dual_ub, fin.d_dual_lb,
                              fin.d_slack_ub, fin.d_slack_lb)
        t = kern.step_ratio(du, fin.d_dual_ub, dl, fin.d_dual_lb,
                            su, fin.d_slack_ub, sl, fin.d_slack_lb)
        alpha = min(1.0, config.boundary_fraction * t)
        kern.apply_step(alpha, z, fin.dz, du, fin.d_dual_ub, dl, fin.d_dual_lb,
                        su, fin.d_slack_ub, sl, fin.d_slack_lb)
        trace.append(IterationRecord(k, mu, sigma, alpha_aff, alpha,
                                     float(res_norm)))

    return SolveResult(
        z_star=np.clip(z, -1.0, 1.0),
        iterations=len(trace),
        final_mu=mu_trace[-1],
        status=status,
        per_iteration_mu=np.asarray(mu_trace),
        iterate=it,
        trace=trace,
        diagnostics={
            "backend": ("structured" if isinstance(newton, StructuredNewtonBackend)
                        else "dense"),
            "core": config.core if config.core != "auto" else kernels.default_core(),
            "factor_dim": newton.factor_dim,
            "slack_floor_hits": n_floored,
            "diag_lifts": diag_lifts,
            "residual_norm": float(res_norm),
        },
    )


def _power_max(M, tol=1e-8, max_iters=20000):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    m = M.shape[0]
    if m == 0 or not np.any(M):
        return 0.0
    rng = np.random.default_rng(1790301)
    v = rng.standard_normal(m)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = M @ v
        lam_new = float(v @ w)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        lam = lam_new
    raise RuntimeError("power iteration did not reach the requested tolerance")


def _power_min_spd(H, tol=1e-8, max_iters=20000):
    """Smallest eigenvalue of an SPD matrix by inverse power iteration."""
    chol = scipy.linalg.cho_factor(H, lower=True, check_finite=False)
    rng = np.random.default_rng(903117)
    v = rng.standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    nu = 0.0
    for _ in range(max_iters):
        w = scipy.linalg.cho_solve(chol, v, check_finite=False)
        nu_new = float(v @ w)  # Rayleigh quotient of inv(H)
        v = w / np.linalg.norm(w)
        if abs(nu_new - nu) <= tol * max(abs(nu_new), 1e-300):
            return 1.0 / nu_new
        nu = nu_new
    raise RuntimeError("inverse power iteration did not reach the requested tolerance")


def lipschitz_bound(E, F, rho, hessian, lift_lipschitz):
    """Lipschitz constant of the solution map with respect to the lifted state.

    The QP linear term depends on the lifted measured state psi through
    rho [F'E; -E] psi, and the solution of a strongly convex QP moves by at
    most (gradient perturbation)/lambda_min(H).  This yields the bound
    rho * sqrt(lambda_max(E'(FF' + I)E)) * L_psi / lambda_min(H), with L_psi
    a Lipschitz constant of the lifting map itself.
    """
    E = np.asarray(E, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    if isinstance(hessian, StructuredHessian):
        hessian = hessian.dense()
    # E'(FF'+I)E = (F'E)'(F'E) + E'E, never forming the n2-square FF'
    G = F.T @ E
    M = G.T @ G + E.T @ E
    lam_max = _power_max(M)
    lam_min = _power_min_spd(np.asarray(hessian, dtype=np.float64))
    return rho * np.sqrt(lam_max) * lift_lipschitz / lam_min
