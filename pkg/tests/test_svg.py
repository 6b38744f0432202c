import xml.etree.ElementTree as ET

from conftest import dataset, scene
from holoflow.holography import build_alpha_model, extract_boundary_data
from holoflow.svg import write_figures
from holoflow.tracing import Tracer
from holoflow.geometry import BoundaryPoint
from holoflow.trajspace import build_graph


def test_figures_are_well_formed(tmp_path):
    sc, ds = scene("annulus"), dataset("annulus")
    g = build_graph(ds)
    model = build_alpha_model(extract_boundary_data(ds))
    traj = [Tracer(sc.domain, sc.flow).fiber(BoundaryPoint(0, 0.7))]
    paths = write_figures(tmp_path, sc.domain, ds.strata, ds, g, model, traj)
    names = sorted(p.name for p in map(__import__("pathlib").Path, paths))
    assert names == ["alpha.svg", "causality.svg", "domain.svg", "graph.svg"]
    for p in paths:
        root = ET.parse(p).getroot()
        assert root.tag.endswith("svg") and len(list(root.iter())) > 3
