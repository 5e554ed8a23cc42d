"""Soft-constraint reformulation of general QPs into unit-box QPs.

A QP with inequality rows y_min <= Ax <= y_max and finite variable bounds
is rewritten over (x, y) with the rows enforced through a quadratic penalty:

    min_{x, y}  0.5 x'Qx + q'x + 0.5 rho ||Ax - y||^2,
    x in [x_min, x_max],  y in [y_min, y_max]

which is the block quadratic [[Q + rho A'A, -rho A'], [-rho A, rho I]] with
linear term [q; 0].  An affine change of variables then maps both boxes onto
[-1, 1], so the canonical unit-box solver applies unchanged; the adapter
records the scaling and the absorbed constant for exact de-scaling.

When the row count is at least the variable count, the scaled Hessian is
expressed as a StructuredHessian so the solver factorizes only the n_x-sized
block per iteration.  Nonuniform row scaling turns the lower-right block
into a general positive diagonal, which the structured form absorbs through
its wx_diag term.
"""

import dataclasses

import numpy as np

from .boxqp import BoxQpProblem, StructuredHessian


@dataclasses.dataclass(frozen=True)
class GeneralQp:
    """Convex QP with inequality rows and finite variable bounds."""

    Q: np.ndarray
    q: np.ndarray
    A: np.ndarray
    y_min: np.ndarray
    y_max: np.ndarray
    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        for name in ("Q", "q", "A", "y_min", "y_max", "x_min", "x_max"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=np.float64))
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite (bounded boxes required)")
        if np.any(self.x_min > self.x_max):
            raise ValueError("x_min must not exceed x_max")
        if np.any(self.y_min > self.y_max):
            raise ValueError("y_min must not exceed y_max")

    @property
    def n_x(self):
        return self.Q.shape[0]

    @property
    def n_y(self):
        return self.A.shape[0] if self.A.size else 0

    def objective(self, x):
        return float(0.5 * x @ (self.Q @ x) + self.q @ x)

    def violation(self, x):
        """Componentwise distance of Ax outside [y_min, y_max]."""
        if self.n_y == 0:
            return np.zeros(0)
        Ax = self.A @ x
        return np.maximum(0.0, np.maximum(Ax - self.y_max, self.y_min - Ax))


@dataclasses.dataclass
class SoftBoxQp:
    """Penalized QP rescaled onto the unit box, plus the de-scaling data.

    The solver decision is z = col(x_tilde, y_tilde); descale() maps it back
    through value = center + half_width * tilde.  Variables with zero-width
    x bounds are eliminated before softening and reinserted on de-scaling;
    zero-width y rows are folded into the x-block objective (their penalty
    no longer involves a free y coordinate).
    """

    problem: BoxQpProblem
    rho: float
    x_center: np.ndarray
    x_halfwidth: np.ndarray
    y_center: np.ndarray
    y_halfwidth: np.ndarray
    objective_constant: float
    source: GeneralQp
    free_idx: np.ndarray   # indices of x kept as decisions
    fixed_idx: np.ndarray  # indices pinned by zero-width bounds
    fixed_val: np.ndarray
    soft_rows: np.ndarray  # inequality rows with a y decision variable

    @property
    def n_x(self):
        return self.free_idx.shape[0]

    @property
    def n_y(self):
        return self.soft_rows.shape[0]

    def descale(self, z):
        """Map a unit-box solver point back to the original (x, y)."""
        x_free = self.x_center + self.x_halfwidth * z[:self.n_x]
        x = np.empty(self.source.n_x)
        x[self.free_idx] = x_free
        x[self.fixed_idx] = self.fixed_val
        y = self.y_center + self.y_halfwidth * z[self.n_x:]
        return x, y

    def scaled_objective(self, z):
        """Solver objective plus the absorbed constant (the penalized cost)."""
        return self.problem.objective(z) + self.objective_constant


def _structured_split(H11, coupling_scale, A_scaled, y_scale_sq, rho):
    """Express the scaled soft Hessian as a StructuredHessian.

    The scaled lower-right block is the diagonal rho*y_scale_sq; choosing
    the structure's penalty as half its smallest entry leaves a strictly
    positive wx_diag, and the off-diagonal coupling fixes F.
    """
    rho_s = 0.5 * rho * float(np.min(y_scale_sq))
    F = (coupling_scale / rho_s) * A_scaled
    M11 = H11 - rho_s * (F.T @ F)
    M11 = 0.5 * (M11 + M11.T)
    wx_diag = rho * y_scale_sq - rho_s
    return StructuredHessian(rho=rho_s, F=F, M11=M11, wx_diag=wx_diag)


def soften(qp, rho=1e6):
    """Penalize the inequality rows and rescale everything onto [-1, 1]."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    n_x_all = qp.n_x
    fixed = np.flatnonzero(qp.x_max == qp.x_min)
    free = np.flatnonzero(qp.x_max > qp.x_min)
    fixed_val = qp.x_min[fixed]

    # eliminate pinned coordinates: their objective and row contributions
    # become linear/constant terms in the remaining variables
    Q = qp.Q[np.ix_(free, free)]
    q = qp.q[free] + qp.Q[np.ix_(free, fixed)] @ fixed_val
    constant = float(0.5 * fixed_val @ (qp.Q[np.ix_(fixed, fixed)] @ fixed_val)
                     + qp.q[fixed] @ fixed_val)
    if qp.n_y:
        A = qp.A[:, free]
        row_shift = qp.A[:, fixed] @ fixed_val
        y_min = qp.y_min - row_shift
        y_max = qp.y_max - row_shift
    else:
        A = np.zeros((0, free.shape[0]))
        y_min = y_max = np.zeros(0)

    # zero-width rows pin y to its bound: fold rho/2 (a'x - c)^2 into Q, q
    hard = np.flatnonzero(y_max == y_min)
    soft_rows = np.flatnonzero(y_max > y_min)
    if hard.size:
        Ah, ch = A[hard], y_min[hard]
        Q = Q + rho * (Ah.T @ Ah)
        q = q + rho * (Ah.T @ -ch)
        constant += 0.5 * rho * float(ch @ ch)
        A, y_min, y_max = A[soft_rows], y_min[soft_rows], y_max[soft_rows]

    n_x, n_y = free.shape[0], soft_rows.shape[0]
    x_center = 0.5 * (qp.x_max[free] + qp.x_min[free])
    x_half = 0.5 * (qp.x_max[free] - qp.x_min[free])
    y_center = 0.5 * (y_max + y_min)
    y_half = 0.5 * (y_max - y_min)

    # penalized quadratic over (x, y), then the affine substitution
    # v = center + S v_tilde:  H_tilde = S H S,  h_tilde = S (H center + g)
    n = n_x + n_y
    H = np.empty((n, n))
    H[:n_x, :n_x] = Q + rho * (A.T @ A)
    H[:n_x, n_x:] = -rho * A.T
    H[n_x:, :n_x] = -rho * A
    H[n_x:, n_x:] = rho * np.eye(n_y)
    g = np.concatenate([q, np.zeros(n_y)])
    center = np.concatenate([x_center, y_center])
    scale = np.concatenate([x_half, y_half])

    h_tilde = scale * (H @ center + g)
    constant += float(0.5 * center @ (H @ center) + g @ center)

    if n_y >= n_x and n_x > 0:
        H11 = (x_half[:, None] * H[:n_x, :n_x]) * x_half[None, :]
        A_scaled = (y_half[:, None] * A) * x_half[None, :]
        structure = _structured_split(H11, rho, A_scaled, y_half ** 2, rho)
        problem = BoxQpProblem(structure, h_tilde)
    else:
        H_tilde = (scale[:, None] * H) * scale[None, :]
        problem = BoxQpProblem(H_tilde, h_tilde)

    return SoftBoxQp(
        problem=problem,
        rho=rho,
        x_center=x_center,
        x_halfwidth=x_half,
        y_center=y_center,
        y_halfwidth=y_half,
        objective_constant=constant,
        source=qp,
        free_idx=free,
        fixed_idx=fixed,
        fixed_val=fixed_val,
        soft_rows=soft_rows,
    )


def desoften(result, soft):
    """De-scale a solver result; returns (x, y, violation).

    violation covers every original inequality row, including any that were
    folded away as zero-width.
    """
    x, y = soft.descale(result.z_star)
    return x, y, soft.source.violation(x)
