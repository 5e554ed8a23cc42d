"""NumPy fallback for the interior-point inner-loop kernels.

Signatures match ``boxmpc._ipm_kernels`` (the Cython extension) exactly; the
solver driver treats the two modules interchangeably.  Every function writes
into caller-owned output arrays so the driver allocates once per solve.
"""

import numpy as np

COMPILED = False


def mu_sum(dual_ub, slack_ub, dual_lb, slack_lb):
    """Return dual_ub.slack_ub + dual_lb.slack_lb (caller divides by 2n)."""
    return float(dual_ub @ slack_ub + dual_lb @ slack_lb)


def barrier_diag(dual_ub, dual_lb, slack_ub, slack_lb, floor, suf, slf, d):
    """Floor the slacks and form the barrier diagonal dual/slack ratios.

    Writes max(slack, floor) into suf/slf and dual_ub/suf + dual_lb/slf into
    d.  Returns the number of floored entries (a convergence diagnostic; the
    floor only engages when slacks collapse below ~1e-14).
    """
    n_floored = int(np.count_nonzero(slack_ub < floor) + np.count_nonzero(slack_lb < floor))
    np.maximum(slack_ub, floor, out=suf)
    np.maximum(slack_lb, floor, out=slf)
    np.divide(dual_ub, suf, out=d)
    d += dual_lb / slf
    return n_floored


def predictor_rhs(dual_ub, dual_lb, slack_ub, slack_lb, r1, r2):
    """Affine-scaling complementarity right-hand sides: r = -dual*slack."""
    np.multiply(dual_ub, slack_ub, out=r1)
    np.negative(r1, out=r1)
    np.multiply(dual_lb, slack_lb, out=r2)
    np.negative(r2, out=r2)


def corrector_rhs(dual_ub, dual_lb, slack_ub, slack_lb,
                  ddu_a, ddl_a, dsu_a, dsl_a, sigma_mu, r1, r2):
    """Centering-plus-corrector right-hand sides.

    r1 = -dual_ub*slack_ub - ddu_a*dsu_a + sigma_mu, and the mirror image for
    the lower bound, where the d*_a arrays hold the affine-scaling direction.
    """
    np.multiply(dual_ub, slack_ub, out=r1)
    r1 += ddu_a * dsu_a
    np.subtract(sigma_mu, r1, out=r1)
    np.multiply(dual_lb, slack_lb, out=r2)
    r2 += ddl_a * dsl_a
    np.subtract(sigma_mu, r2, out=r2)


def reduced_rhs(r1, r2, dual_ub, dual_lb, suf, slf, ra, rb, rc, b):
    """Right-hand side of the condensed Newton system.

    b = ra + (r2 + dual_lb*rc)/slf - (r1 - dual_ub*rb)/suf.  The ra/rb/rc
    equality residuals are identically zero on the feasible path.
    """
    np.multiply(dual_lb, rc, out=b)
    b += r2
    b /= slf
    b += ra
    b -= (r1 - dual_ub * rb) / suf


def expand_direction(dz, dual_ub, dual_lb, suf, slf, r1, r2, rb, rc,
                     ddu, ddl, dsu, dsl):
    """Recover the multiplier and slack directions from the primal one.

    dsu = rb - dz, dsl = dz - rc, then ddu/ddl from the linearized
    complementarity rows using the same floored slacks as the reduction so
    the expanded direction satisfies those rows exactly.
    """
    np.subtract(rb, dz, out=dsu)
    np.subtract(dz, rc, out=dsl)
    np.multiply(dual_ub, dsu, out=ddu)
    np.subtract(r1, ddu, out=ddu)
    ddu /= suf
    np.multiply(dual_lb, dsl, out=ddl)
    np.subtract(r2, ddl, out=ddl)
    ddl /= slf


def step_ratio(dual_ub, ddu, dual_lb, ddl, slack_ub, dsu, slack_lb, dsl):
    """Largest t with all four nonnegative blocks still >= 0 at v + t*dv.

    Returns inf when no component decreases.
    """
    best = np.inf
    for v, dv in ((dual_ub, ddu), (dual_lb, ddl), (slack_ub, dsu), (slack_lb, dsl)):
        neg = dv < 0.0
        if np.any(neg):
            best = min(best, float(np.min(v[neg] / -dv[neg])))
    return best


def mu_after(alpha, dual_ub, ddu, dual_lb, ddl, slack_ub, dsu, slack_lb, dsl):
    """Complementarity sum at the trial point v + alpha*dv (caller divides by 2n)."""
    du = dual_ub + alpha * ddu
    su = slack_ub + alpha * dsu
    dl = dual_lb + alpha * ddl
    sl = slack_lb + alpha * dsl
    return float(du @ su + dl @ sl)


def apply_step(alpha, z, dz, dual_ub, ddu, dual_lb, ddl,
               slack_ub, dsu, slack_lb, dsl):
    """In-place update of all five iterate blocks by alpha times the direction."""
    for v, dv in ((z, dz), (dual_ub, ddu), (dual_lb, ddl),
                  (slack_ub, dsu), (slack_lb, dsl)):
        v += alpha * dv


def kkt_residuals(hz_plus_h, z, dual_ub, dual_lb, slack_ub, slack_lb, ra, rb, rc):
    """Negated stationarity and bound-slack residuals; returns their inf-norm.

    ra = -(Hz + h + dual_ub - dual_lb), rb = -(z + slack_ub - 1),
    rc = -(z - slack_lb + 1).
    """
    np.add(hz_plus_h, dual_ub, out=ra)
    ra -= dual_lb
    np.negative(ra, out=ra)
    np.subtract(1.0, z, out=rb)
    rb -= slack_ub
    np.add(z, 1.0, out=rc)
    rc -= slack_lb
    np.negative(rc, out=rc)
    return max(float(np.max(np.abs(ra))), float(np.max(np.abs(rb))),
               float(np.max(np.abs(rc))))
