"""Central numeric tolerances.

Every solver and test pulls its thresholds from here so the tiers stay
consistent package-wide:

* ``SOLVE_TOL`` — linear-algebra residuals (factor/solve accuracy),
* ``OPT_TOL`` — first-order optimality for iterative minimization,
* ``PROP_TOL`` — looser tolerance for statistical/property checks.
"""

SOLVE_TOL = 1e-10
OPT_TOL = 1e-8
PROP_TOL = 1e-6

# Armijo sufficient-decrease constant and backtracking factor shared by the
# quasi-Newton and barrier solvers.
ARMIJO_C = 1e-4
BACKTRACK = 0.5

# Iteration caps.
QN_MAX_ITER = 500
BARRIER_OUTER = 10

# Constraint-tightening margin for strict output-consistency polyhedra.
EPS_MARGIN = 1e-9
