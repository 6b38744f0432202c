"""Recover the topology of the domain from boundary measurements alone.

The boundary data is the pairing "entry point -> next boundary point" plus
the values of f on the boundary.  It is serialised to JSON and read back;
from then on no trajectory is integrated, yet the number of holes and the
number of boundary circles come back out.  Run::

    python3 demos/02_boundary_holography.py
"""

import holoflow.tracing as tracing
from holoflow.holography import BoundaryData, build_alpha_model, extract_boundary_data, reconstruct_invariants
from holoflow.scenes import SCRIPTED, builtin


def _forbidden(*args, **kwargs):
    raise RuntimeError("the bulk was consulted")


def main():
    texts = {}
    for name in SCRIPTED:
        sc = builtin(name)
        ds = tracing.sample_causality_map(sc.domain, sc.flow, 100.0)
        texts[name] = extract_boundary_data(ds, sc.domain).to_json()
        print(f"{name:12s} boundary data: {len(ds.samples)} pairs, {len(texts[name]) / 1024:.0f} KiB of JSON")

    # from here on, integrating a trajectory is an error
    tracing.dp45_step = _forbidden
    tracing.Tracer._run = _forbidden

    print("\nReconstruction from the JSON only:")
    for name, text in texts.items():
        rec = reconstruct_invariants(build_alpha_model(BoundaryData.from_json(text)))
        holes = SCRIPTED.index(name)
        print(f"{name:12s} chi = {rec['chi_X']:2d} (expected {1 - holes:2d}), "
              f"boundary circles = {rec['boundary_components']} (expected {1 + holes})")


if __name__ == "__main__":
    main()
