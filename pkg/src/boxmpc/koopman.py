"""EDMD identification of a lifted linear predictor, and its condensation.

The lift maps the state x to psi(x) = [x; phi_1(x); ...; phi_m(x)] with
thin-plate radial basis functions phi_i(x) = r^2 log r, r = ||x - c_i||.
Keeping the raw state as the leading block lets the output matrix be the
fixed projection C = [I, 0], so no decoder is fitted.

fit() solves the least-squares problem

    min_{A,B}  sum_j || psi(x_j') - A psi(x_j) - B u_j ||^2

over snapshot pairs, giving the one-step predictor psi' = A psi + B u.
build_prediction_matrices() eliminates the lifted trajectory over a horizon
N, leaving x_stack = E psi(x_0) + F u_stack with E = stack(CA, ..., CA^N)
and F block lower-triangular Toeplitz with blocks C A^(i-j) B.
"""

import dataclasses
import enum
import warnings

import numpy as np
import scipy.linalg


class LiftKind(enum.Enum):
    THIN_PLATE = "thin_plate"


@dataclasses.dataclass(frozen=True)
class LiftSpec:
    """State dimension plus RBF centers; n_rbf = 0 gives the identity lift."""

    n_x: int
    centers: np.ndarray  # (n_rbf, n_x)
    kind: LiftKind = LiftKind.THIN_PLATE

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, self.n_x)
        object.__setattr__(self, "centers", centers)

    @property
    def n_rbf(self):
        return self.centers.shape[0]

    @property
    def n_psi(self):
        return self.n_x + self.n_rbf


def _thin_plate(sq_dist):
    # r^2 log r = 0.5 * d2 * log(d2); the r -> 0 limit is 0
    out = np.zeros_like(sq_dist)
    pos = sq_dist > 0.0
    out[pos] = 0.5 * sq_dist[pos] * np.log(sq_dist[pos])
    return out


def lift(spec, x):
    """Lift one state vector to [x; RBF values]."""
    x = np.asarray(x, dtype=np.float64)
    if spec.n_rbf == 0:
        return x.copy()
    diff = x[None, :] - spec.centers
    sq_dist = np.einsum("ij,ij->i", diff, diff)
    return np.concatenate([x, _thin_plate(sq_dist)])


def lift_columns(spec, X):
    """Lift states stored as columns: (n_x, m) -> (n_psi, m)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if spec.n_rbf == 0:
        return X.copy()
    # squared distances via ||x||^2 + ||c||^2 - 2 c.x, clipped against round-off
    cross = spec.centers @ X
    sq_dist = (np.einsum("ij,ij->i", spec.centers, spec.centers)[:, None]
               + np.einsum("ij,ij->j", X, X)[None, :] - 2.0 * cross)
    np.maximum(sq_dist, 0.0, out=sq_dist)
    return np.vstack([X, _thin_plate(sq_dist)])


def sample_centers(lower, upper, n_rbf, seed):
    """Draw RBF centers uniformly from a componentwise bounding box."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return rng.uniform(lower, upper, size=(n_rbf, lower.shape[0]))


@dataclasses.dataclass
class SnapshotDataset:
    """Column-aligned snapshots: state X, input U, successor state Xp."""

    X: np.ndarray
    U: np.ndarray
    Xp: np.ndarray

    def __post_init__(self):
        if not (self.X.shape[1] == self.U.shape[1] == self.Xp.shape[1]):
            raise ValueError("X, U, Xp must have the same number of columns")
        if self.X.shape[0] != self.Xp.shape[0]:
            raise ValueError("X and Xp must have the same state dimension")
        for name in ("X", "U", "Xp"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n_samples(self):
        return self.X.shape[1]


@dataclasses.dataclass
class KoopmanModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    lift: LiftSpec
    fit_residual: float | None = None
    rank_deficient: bool = False
    data_checksum: str | None = None

    @property
    def n_psi(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_x(self):
        return self.C.shape[0]


def output_matrix(n_x, n_psi):
    """The fixed projection [I, 0] recovering the state from the lift."""
    C = np.zeros((n_x, n_psi))
    C[:, :n_x] = np.eye(n_x)
    return C


def fit(dataset, spec):
    """Least-squares EDMD fit of [A B] over lifted snapshot pairs.

    Solved through the normal equations with a shared Cholesky; a singular
    Gram matrix falls back to a lambda = 1e-10 diagonal regularization and
    then to minimum-norm least squares, with the deficiency flagged on the
    model either way.
    """
    Psi = lift_columns(spec, dataset.X)
    Psi_next = lift_columns(spec, dataset.Xp)
    U = np.ascontiguousarray(dataset.U, dtype=np.float64)
    G = np.vstack([Psi, U])
    n_rows = G.shape[0]
    if dataset.n_samples < n_rows:
        warnings.warn(
            f"underdetermined fit: {dataset.n_samples} samples for {n_rows} "
            "lifted coefficients per row", stacklevel=2)

    gram = G @ G.T
    rhs = G @ Psi_next.T  # (n_rows, n_psi), solution maps to [A B]'
    rank_deficient = False
    try:
        theta = scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(gram, lower=True), rhs).T
    except scipy.linalg.LinAlgError:
        rank_deficient = True
        try:
            theta = scipy.linalg.cho_solve(
                scipy.linalg.cho_factor(gram + 1e-10 * np.eye(n_rows),
                                        lower=True), rhs).T
        except scipy.linalg.LinAlgError:
            theta = np.linalg.lstsq(G.T, Psi_next.T, rcond=None)[0].T
    residual = float(np.linalg.norm(Psi_next - theta @ G) ** 2)
    n_psi = spec.n_psi
    return KoopmanModel(
        A=np.ascontiguousarray(theta[:, :n_psi]),
        B=np.ascontiguousarray(theta[:, n_psi:]),
        C=output_matrix(spec.n_x, n_psi),
        lift=spec,
        fit_residual=residual,
        rank_deficient=rank_deficient,
    )


@dataclasses.dataclass(frozen=True)
class PredictionMatrices:
    """Multi-step maps: stacked predicted states = E psi(x0) + F u_stack."""

    E: np.ndarray  # (N*n_x, n_psi)
    F: np.ndarray  # (N*n_x, N*n_u)
    N: int

    @property
    def n_x(self):
        return self.E.shape[0] // self.N

    @property
    def n_u(self):
        return self.F.shape[1] // self.N


def build_prediction_matrices(model, N):
    """Condense the lifted predictor over an N-step horizon.

    Reuses the running product C A^k: each horizon step costs one
    (n_x x n_psi)(n_psi x n_psi) multiply instead of a fresh matrix power.
    """
    if N < 1:
        raise ValueError("horizon must be at least 1")
    n_x, n_psi, n_u = model.n_x, model.n_psi, model.n_u
    E = np.empty((N * n_x, n_psi))
    impulse = []  # impulse[k] = C A^k B
    CAk = model.C
    for i in range(N):
        impulse.append(CAk @ model.B)
        CAk = CAk @ model.A
        E[i * n_x:(i + 1) * n_x] = CAk
    F = np.zeros((N * n_x, N * n_u))
    for i in range(N):
        for j in range(i + 1):
            F[i * n_x:(i + 1) * n_x, j * n_u:(j + 1) * n_u] = impulse[i - j]
    return PredictionMatrices(E=E, F=F, N=N)


def predict(model, x0, inputs):
    """Roll the lifted predictor forward; returns the N predicted states."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    psi = lift(model.lift, x0)
    out = np.empty((inputs.shape[0], model.n_x))
    for k, u in enumerate(inputs):
        psi = model.A @ psi + model.B @ u
        out[k] = model.C @ psi
    return out


def lift_lipschitz_estimate(spec, states_a, states_b):
    """Max sampled difference quotient ||psi(b)-psi(a)|| / ||b-a||.

    states_a, states_b hold paired sample points as columns; coincident
    pairs are skipped.  This is the empirical stand-in for the lift's
    Lipschitz constant used by the policy sensitivity bound.
    """
    Pa = lift_columns(spec, states_a)
    Pb = lift_columns(spec, states_b)
    num = np.linalg.norm(Pb - Pa, axis=0)
    den = np.linalg.norm(np.asarray(states_b, dtype=np.float64)
                         - np.asarray(states_a, dtype=np.float64), axis=0)
    mask = den > 0.0
    if not np.any(mask):
        raise ValueError("all sample pairs coincide")
    return float(np.max(num[mask] / den[mask]))
