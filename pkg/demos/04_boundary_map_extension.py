"""Extend a boundary map to the whole domain.

A map between the boundaries of two domains that intertwines their causality
maps determines a map of the interiors: follow the trajectory back to its
entry point, map the entry point, and walk the image trajectory up to the
same value of f.  Here the second domain is the first one rotated.  Run::

    python3 demos/04_boundary_map_extension.py
"""

import math

import numpy as np

from holoflow.errors import CommutationViolation
from holoflow.holography import BoundaryMap, extend_boundary_map
from holoflow.scenes import builtin, rotated


def main(theta=0.7):
    sc = builtin("two_holes")
    sc2, phi = rotated(sc, theta)
    res = extend_boundary_map(sc, sc2, phi, grid=30)
    c, s = math.cos(theta), math.sin(theta)
    err = np.max(np.linalg.norm(res.images - res.points @ np.array([[c, s], [-s, c]]), axis=1))
    print(f"Rotation by {theta}: commutation defect {res.commutation_error:.1e}; the extension is the rotation "
          f"to within {err:.1e} on {len(res.points)} interior points.")

    try:
        extend_boundary_map(sc, sc, BoundaryMap.shift([0.05, 0.0, 0.0]), grid=10)
    except CommutationViolation as exc:
        print(f"Turning only the outer circle does not intertwine the flows and is refused: {exc}")


if __name__ == "__main__":
    main()
