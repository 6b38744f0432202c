"""Functions on the domain, seen from the boundary.

Two families of functions are visible from the boundary: functions constant
along trajectories (they factor through the trajectory graph) and functions
of the Lyapunov function f.  Only constants belong to both, and products of
the two families approximate any smooth function.  Run::

    python3 demos/03_function_algebra.py
"""

from holoflow import algebra
from holoflow.scenes import builtin
from holoflow.tracing import sample_causality_map


def main(name="annulus"):
    sc = builtin(name)
    ds = sample_causality_map(sc.domain, sc.flow, 100.0)
    grid = algebra.build_sample_grid(ds, sc.domain, sc.flow, n=24)
    A = algebra.build_v_invariant_space(ds, grid)
    B = algebra.build_f_pullback_space(sc.flow, grid)
    print(f"{name}: {grid.n_interior} interior sample points; "
          f"{A.dim} independent invariant functions, {B.dim} functions of f.")

    r = algebra.intersection_dimension(A, B)
    print(f"Shared directions: {r.dim} (the constants); largest principal cosines {r.cosines[:3].round(6)}, "
          f"gap {r.spectral_gap:.3f}.")

    print("\nFitting sin(x + 2y) by sums of (invariant) x (function of f):")
    for fit in algebra.rank_sweep("sin(x + 2*y)", A, B, grid):
        print(f"  rank {fit.rank:2d}: relative residual {fit.residual:.2e}  ({fit.method})")

    print("\nProbing boundary functions:")
    for psi in ("1", "y"):
        rep = algebra.conjecture_probe(ds, sc.domain, sc.flow, psi)
        print(f"  psi = {psi}: invariant {rep.in_M_Cv}, fiber spread {rep.fiber_error:.2e}")
    psi, rec = algebra.random_invariant_function(grid, A, seed=1)
    rep = algebra.conjecture_probe(ds, sc.domain, sc.flow, psi, name="random")
    print(f"  random combination of {rec['generators']}: invariant {rep.in_M_Cv}, "
          f"smoothness score {rep.extension_smoothness_score:.3f} (heuristic, reported only)")


if __name__ == "__main__":
    main()
