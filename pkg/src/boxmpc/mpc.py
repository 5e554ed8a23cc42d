"""Assembly of the tracking MPC into a box-constrained QP.

Over a horizon N, with stacked inputs U and predicted states X and the
decision z = col(U, X), the tracking objective with a dynamics penalty

    J(z) = sum ||x_k - x_r||^2_Wx + ||u_k - u_r||^2_Wu + ||u_k - u_km1||^2_Wdu
           + rho ||X - E psi(x_t) - F U||^2

is an exact quadratic in z:  J(z) = z'Hz + 2 h(x_t)'z + c0.  The solver
minimizes 0.5 z'Hz + h'z, which shares the argmin; the instance records the
scale (2) and offset (c0) so reported costs are absolute.  H is fixed across
samples and carries the 2x2 block structure the solver's Schur backend
exploits; only h and c0 depend on the measured state and references.

The condensed formulation keeps only U as the decision and enforces the
state bounds through y = F U, with bounds shifted by E psi(x_t); it is the
baseline route, solved through the soft-constraint adapter.
"""

import dataclasses
import json

import numpy as np

from .adapter import GeneralQp
from .boxqp import BoxQpProblem, StructuredHessian
from .koopman import lift


@dataclasses.dataclass(frozen=True)
class MpcWeights:
    """Diagonal tracking weights, input-rate weight, and dynamics penalty.

    Wx and Wu must be strictly positive so H stays positive definite; the
    rate weight Wdu and the penalty rho may be zero (zero rho drops the
    block structure and leaves a block-diagonal Hessian).
    """

    Wx: np.ndarray
    Wu: np.ndarray
    Wdu: np.ndarray
    rho: float
    N: int

    def __post_init__(self):
        for name in ("Wx", "Wu", "Wdu"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name),
                                                        dtype=np.float64)))
        if np.any(self.Wx <= 0) or np.any(self.Wu <= 0):
            raise ValueError("Wx and Wu must be strictly positive")
        if np.any(self.Wdu < 0):
            raise ValueError("Wdu must be nonnegative")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.Wdu.shape != self.Wu.shape:
            raise ValueError("Wdu and Wu must have the same length")
        if self.N < 1:
            raise ValueError("horizon must be at least 1")

    @property
    def n_x(self):
        return self.Wx.shape[0]

    @property
    def n_u(self):
        return self.Wu.shape[0]


@dataclasses.dataclass(frozen=True)
class MpcReferences:
    """Constant references replicated across the horizon."""

    x_r: np.ndarray
    u_r: np.ndarray

    def __post_init__(self):
        for name in ("x_r", "u_r"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)


def build_weight_blocks(weights):
    """Horizon replications of the diagonals plus the input-rate form.

    Returns (wx_bar, wu_bar, R) where wx_bar, wu_bar are the stacked
    diagonals and R is the symmetric block-tridiagonal matrix of
    sum_k ||u_k - u_{k-1}||^2_Wdu with u_{-1} = 0: every u_k appears once as
    the leading and (except the last) once as the trailing term, so the
    diagonal blocks are 2*Wdu for k < N-1 and Wdu for k = N-1, with -Wdu
    off-diagonal blocks.
    """
    N, n_u = weights.N, weights.n_u
    wx_bar = np.tile(weights.Wx, N)
    wu_bar = np.tile(weights.Wu, N)
    R = np.zeros((N * n_u, N * n_u))
    idx = np.arange(n_u)
    for k in range(N):
        d = 2.0 * weights.Wdu if k < N - 1 else weights.Wdu
        R[k * n_u + idx, k * n_u + idx] = d
        if k > 0:
            R[(k - 1) * n_u + idx, k * n_u + idx] = -weights.Wdu
            R[k * n_u + idx, (k - 1) * n_u + idx] = -weights.Wdu
    return wx_bar, wu_bar, R


@dataclasses.dataclass
class MpcProblemInstance:
    """One solver-ready sample of the MPC problem.

    The decision layout is z = col(U, X): n1 = N*n_u input entries first,
    then n2 = N*n_x predicted-state entries, each bounded in [-1, 1] (so
    2*(n1+n2) bound constraints).  tracking_objective maps solver objective
    values back to the absolute tracking cost.
    """

    problem: BoxQpProblem
    psi0: np.ndarray
    N: int
    n_u: int
    n_x: int
    objective_scale: float
    objective_offset: float

    @property
    def n1(self):
        return self.N * self.n_u

    @property
    def n2(self):
        return self.N * self.n_x

    @property
    def bound_constraint_count(self):
        return 2 * (self.n1 + self.n2)

    def tracking_objective(self, z):
        return self.objective_scale * self.problem.objective(z) + self.objective_offset


class MpcBoxQpBuilder:
    """Precomputes the sample-invariant blocks of the MPC BoxQP.

    H (and its block structure), the linear-term map rho*[F'E; -E], and
    E'E for the offset are all fixed offline; build() only lifts the
    measured state and assembles h and the constant, so the per-sample cost
    is a handful of small matrix-vector products.
    """

    def __init__(self, model, pm, weights):
        if pm.n_x != weights.n_x or pm.n_u != weights.n_u or pm.N != weights.N:
            raise ValueError("prediction matrices and weights disagree on dimensions")
        self.model = model
        self.pm = pm
        self.weights = weights
        wx_bar, wu_bar, R = build_weight_blocks(weights)
        self._wx_bar = wx_bar
        self._wu_bar = wu_bar
        M11 = R + np.diag(wu_bar)
        if weights.rho > 0:
            self._hessian = StructuredHessian(rho=weights.rho, F=pm.F.copy(),
                                              M11=M11, wx_diag=wx_bar)
        else:
            n1 = weights.N * weights.n_u
            dense = np.zeros((n1 + wx_bar.shape[0],) * 2)
            dense[:n1, :n1] = M11
            dense[n1:, n1:] = np.diag(wx_bar)
            self._hessian = dense
        # h(x_t) = P psi(x_t) - ref_term, split by block
        self._P_top = weights.rho * (pm.F.T @ pm.E)
        self._P_bot = -weights.rho * pm.E
        self._EtE = pm.E.T @ pm.E
        # one eager SPD validation; per-sample builds skip it (H is shared)
        n = self._P_top.shape[0] + pm.E.shape[0]
        BoxQpProblem(self._hessian, np.zeros(n), validate=True)

    def build(self, x_t, refs):
        w = self.weights
        psi = lift(self.model.lift, x_t)
        xr_bar = np.tile(refs.x_r, w.N)
        ur_bar = np.tile(refs.u_r, w.N)
        h = np.concatenate([
            self._P_top @ psi - self._wu_bar * ur_bar,
            self._P_bot @ psi - self._wx_bar * xr_bar,
        ])
        offset = (float(xr_bar @ (self._wx_bar * xr_bar))
                  + float(ur_bar @ (self._wu_bar * ur_bar))
                  + w.rho * float(psi @ (self._EtE @ psi)))
        return MpcProblemInstance(
            problem=BoxQpProblem(self._hessian, h, validate=False),
            psi0=psi,
            N=w.N,
            n_u=w.n_u,
            n_x=w.n_x,
            objective_scale=2.0,
            objective_offset=offset,
        )


def build_boxqp(model, pm, weights, refs, x_t):
    """One-shot assembly of the MPC BoxQP at the measured state x_t."""
    return MpcBoxQpBuilder(model, pm, weights).build(x_t, refs)


def tracking_objective_terms(pm, weights, refs, psi, z):
    """Direct term-by-term tracking cost at z (oracle for the assembled QP)."""
    N, n_u, n_x = weights.N, weights.n_u, weights.n_x
    U = z[:N * n_u].reshape(N, n_u)
    X = z[N * n_u:].reshape(N, n_x)
    total = 0.0
    u_prev = np.zeros(n_u)
    for k in range(N):
        du = U[k] - u_prev
        total += float((X[k] - refs.x_r) @ (weights.Wx * (X[k] - refs.x_r)))
        total += float((U[k] - refs.u_r) @ (weights.Wu * (U[k] - refs.u_r)))
        total += float(du @ (weights.Wdu * du))
        u_prev = U[k]
    gap = X.reshape(-1) - pm.E @ psi - pm.F @ z[:N * n_u]
    total += weights.rho * float(gap @ gap)
    return total


def build_condensed_qp(model, pm, weights, refs, x_t):
    """The input-only condensed QP with hard state bounds (baseline route).

    Decision U with Q = F'Wx_bar F + Wu_bar + R and
    q = F'Wx_bar (E psi - xr_bar) - Wu_bar ur_bar; the state bounds become
    -1 - E psi <= F U <= 1 - E psi.  Solved through the soft-constraint
    adapter.
    """
    wx_bar, wu_bar, R = build_weight_blocks(weights)
    psi = lift(model.lift, x_t)
    e_psi = pm.E @ psi
    xr_bar = np.tile(refs.x_r, weights.N)
    ur_bar = np.tile(refs.u_r, weights.N)
    Q = pm.F.T @ (wx_bar[:, None] * pm.F) + np.diag(wu_bar) + R
    q = pm.F.T @ (wx_bar * (e_psi - xr_bar)) - wu_bar * ur_bar
    n1 = weights.N * weights.n_u
    return GeneralQp(
        Q=0.5 * (Q + Q.T),
        q=q,
        A=pm.F.copy(),
        y_min=-1.0 - e_psi,
        y_max=1.0 - e_psi,
        x_min=np.full(n1, -1.0),
        x_max=np.full(n1, 1.0),
    )


def shift_guess(z_prev, N, n_u, n_x):
    """Time-shift a solution one step for warm starting.

    Drops the first input and state block and duplicates the last of each,
    matching the receding horizon: what was optimal for steps 1..N-1 is the
    guess for steps 0..N-2.
    """
    z_prev = np.asarray(z_prev, dtype=np.float64)
    U = z_prev[:N * n_u]
    X = z_prev[N * n_u:]
    return np.concatenate([U[n_u:], U[-n_u:], X[n_x:], X[-n_x:]])


def extract_policy(result, n_u):
    """The applied control: the first input block of the solution."""
    return result.z_star[:n_u].copy()


def save_config(path, weights, reference, epsilon=1e-6, warm_start=True):
    """Write the MPC run configuration as JSON.

    reference is a dict understood by the closed-loop harness, either
    {"kind": "constant", "x_r": [...], "u_r": [...]} or a named generator
    such as {"kind": "traveling_wave", "amplitude": ..., "period": ...}.
    """
    payload = {
        "horizon": weights.N,
        "weights": {
            "Wx": weights.Wx.tolist(),
            "Wu": weights.Wu.tolist(),
            "Wdu": weights.Wdu.tolist(),
            "rho": weights.rho,
        },
        "reference": reference,
        "epsilon": epsilon,
        "warm_start": warm_start,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_config(path):
    """Read a JSON MPC configuration; returns (weights, reference, epsilon, warm)."""
    with open(path) as fh:
        payload = json.load(fh)
    w = payload["weights"]
    weights = MpcWeights(Wx=np.asarray(w["Wx"]), Wu=np.asarray(w["Wu"]),
                         Wdu=np.asarray(w["Wdu"]), rho=float(w["rho"]),
                         N=int(payload["horizon"]))
    return (weights, payload["reference"], float(payload.get("epsilon", 1e-6)),
            bool(payload.get("warm_start", True)))
