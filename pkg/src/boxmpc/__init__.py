"""Box-constrained QP interior-point solver with Koopman-MPC tooling.

Layers, from the inside out:

- boxqp: feasible Mehrotra predictor-corrector solver over the unit box,
  with dense and Schur-structured Newton backends and compiled inner-loop
  kernels (NumPy fallback selected automatically).
- koopman: thin-plate RBF lifting, EDMD least-squares fit, and multi-step
  prediction matrices.
- mpc: assembly of the dynamics-relaxed tracking problem into a BoxQP,
  plus the condensed QP baseline.
- kdv: split-step spectral simulator for the forced KdV equation, training
  data generation, and the closed-loop harness.
- adapter: soft-constraint reformulation of general QPs into BoxQPs.
- matio / bench / cli: serialization, benchmark studies, command line.
"""

from .boxqp import (
    BoxQpProblem,
    DenseNewtonBackend,
    IpmDirection,
    IpmIterate,
    IterationRecord,
    NewtonReduction,
    SolveResult,
    SolveStatus,
    SolverConfig,
    StopMode,
    StructuredHessian,
    StructuredNewtonBackend,
    cold_start,
    duality_measure,
    equality_residuals,
    infeasible_start,
    lipschitz_bound,
    newton_reduce,
    solve,
    solve_reduced_dense,
    solve_reduced_structured,
    step_length,
    warm_start,
)

__version__ = "0.1.0"
