# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Fused inner-loop kernels for the box-constrained interior-point solver.

Each function is a single pass over the iterate vectors, replacing chains of
NumPy temporaries; see ``_ipm_kernels_py`` for the reference semantics.
"""

from libc.math cimport INFINITY, fabs

COMPILED = True


def mu_sum(double[::1] dual_ub, double[::1] slack_ub,
           double[::1] dual_lb, double[::1] slack_lb):
    cdef Py_ssize_t i, n = dual_ub.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += dual_ub[i] * slack_ub[i] + dual_lb[i] * slack_lb[i]
    return acc


def barrier_diag(double[::1] dual_ub, double[::1] dual_lb,
                 double[::1] slack_ub, double[::1] slack_lb, double floor,
                 double[::1] suf, double[::1] slf, double[::1] d):
    cdef Py_ssize_t i, n = dual_ub.shape[0]
    cdef int n_floored = 0
    cdef double su, sl
    for i in range(n):
        su = slack_ub[i]
        sl = slack_lb[i]
        if su < floor:
            su = floor
            n_floored += 1
        if sl < floor:
            sl = floor
            n_floored += 1
        suf[i] = su
        slf[i] = sl
        d[i] = dual_ub[i] / su + dual_lb[i] / sl
    return n_floored


def predictor_rhs(double[::1] dual_ub, double[::1] dual_lb,
                  double[::1] slack_ub, double[::1] slack_lb,
                  double[::1] r1, double[::1] r2):
    cdef Py_ssize_t i, n = dual_ub.shape[0]
    for i in range(n):
        r1[i] = -dual_ub[i] * slack_ub[i]
        r2[i] = -dual_lb[i] * slack_lb[i]


def corrector_rhs(double[::1] dual_ub, double[::1] dual_lb,
                  double[::1] slack_ub, double[::1] slack_lb,
                  double[::1] ddu_a, double[::1] ddl_a,
                  double[::1] dsu_a, double[::1] dsl_a,
                  double sigma_mu, double[::1] r1, double[::1] r2):
    cdef Py_ssize_t i, n = dual_ub.shape[0]
    for i in range(n):
        r1[i] = sigma_mu - dual_ub[i] * slack_ub[i] - ddu_a[i] * dsu_a[i]
        r2[i] = sigma_mu - dual_lb[i] * slack_lb[i] - ddl_a[i] * dsl_a[i]


def reduced_rhs(double[::1] r1, double[::1] r2,
                double[::1] dual_ub, double[::1] dual_lb,
                double[::1] suf, double[::1] slf,
                double[::1] ra, double[::1] rb, double[::1] rc,
                double[::1] b):
    cdef Py_ssize_t i, n = r1.shape[0]
    for i in range(n):
        b[i] = (ra[i]
                + (r2[i] + dual_lb[i] * rc[i]) / slf[i]
                - (r1[i] - dual_ub[i] * rb[i]) / suf[i])


def expand_direction(double[::1] dz, double[::1] dual_ub, double[::1] dual_lb,
                     double[::1] suf, double[::1] slf,
                     double[::1] r1, double[::1] r2,
                     double[::1] rb, double[::1] rc,
                     double[::1] ddu, double[::1] ddl,
                     double[::1] dsu, double[::1] dsl):
    cdef Py_ssize_t i, n = dz.shape[0]
    cdef double su_dir, sl_dir
    for i in range(n):
        su_dir = rb[i] - dz[i]
        sl_dir = dz[i] - rc[i]
        dsu[i] = su_dir
        dsl[i] = sl_dir
        ddu[i] = (r1[i] - dual_ub[i] * su_dir) / suf[i]
        ddl[i] = (r2[i] - dual_lb[i] * sl_dir) / slf[i]


def step_ratio(double[::1] dual_ub, double[::1] ddu,
               double[::1] dual_lb, double[::1] ddl,
               double[::1] slack_ub, double[::1] dsu,
               double[::1] slack_lb, double[::1] dsl):
    cdef Py_ssize_t i, n = dual_ub.shape[0]
    cdef double best = INFINITY, t
    for i in range(n):
        if ddu[i] < 0.0:
            t = dual_ub[i] / -ddu[i]
            if t < best:
                best = t
        if ddl[i] < 0.0:
            t = dual_lb[i] / -ddl[i]
            if t < best:
                best = t
        if dsu[i] < 0.0:
            t = slack_ub[i] / -dsu[i]
            if t < best:
                best = t
        if dsl[i] < 0.0:
            t = slack_lb[i] / -dsl[i]
            if t < best:
                best = t
    return best


def mu_after(double alpha, double[::1] dual_ub, double[::1] ddu,
             double[::1] dual_lb, double[::1] ddl,
             double[::1] slack_ub, double[::1] dsu,
             double[::1] slack_lb, double[::1] dsl):
    cdef Py_ssize_t i, n = dual_ub.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += ((dual_ub[i] + alpha * ddu[i]) * (slack_ub[i] + alpha * dsu[i])
                + (dual_lb[i] + alpha * ddl[i]) * (slack_lb[i] + alpha * dsl[i]))
    return acc


def apply_step(double alpha, double[::1] z, double[::1] dz,
               double[::1] dual_ub, double[::1] ddu,
               double[::1] dual_lb, double[::1] ddl,
               double[::1] slack_ub, double[::1] dsu,
               double[::1] slack_lb, double[::1] dsl):
    cdef Py_ssize_t i, n = z.shape[0]
    for i in range(n):
        z[i] += alpha * dz[i]
        dual_ub[i] += alpha * ddu[i]
        dual_lb[i] += alpha * ddl[i]
        slack_ub[i] += alpha * dsu[i]
        slack_lb[i] += alpha * dsl[i]


def kkt_residuals(double[::1] hz_plus_h, double[::1] z,
                  double[::1] dual_ub, double[::1] dual_lb,
                  double[::1] slack_ub, double[::1] slack_lb,
                  double[::1] ra, double[::1] rb, double[::1] rc):
    cdef Py_ssize_t i, n = z.shape[0]
    cdef double worst = 0.0, v
    for i in range(n):
        v = -(hz_plus_h[i] + dual_ub[i] - dual_lb[i])
        ra[i] = v
        if fabs(v) > worst:
            worst = fabs(v)
        v = 1.0 - z[i] - slack_ub[i]
        rb[i] = v
        if fabs(v) > worst:
            worst = fabs(v)
        v = slack_lb[i] - z[i] - 1.0
        rc[i] = v
        if fabs(v) > worst:
            worst = fabs(v)
    return worst
