import json
import math

import pytest

from holoflow.errors import SceneError
from holoflow.flowfield import check_traversing
from holoflow.geometry import BoundaryPoint
from holoflow.scenes import BUILTIN, SCRIPTED, builtin, load_scene, rotated, scene_from_dict


def _doc(**over):
    d = json.loads(builtin("annulus").dumps())
    d.update(over)
    return d


class TestBuiltins:
    @pytest.mark.parametrize("name", [n for n in BUILTIN if n != "radial_annulus"])
    def test_traversing(self, name):
        sc = builtin(name)
        assert check_traversing(sc.domain, sc.flow).ok

    def test_hole_counts(self):
        assert [len(builtin(n).domain.holes) for n in SCRIPTED] == [0, 1, 2, 3, 4]

    def test_unknown(self):
        with pytest.raises(SceneError) as exc:
            builtin("torus")
        assert exc.value.field == "<name>"


class TestFiles:
    def test_round_trip(self, tmp_path):
        sc = builtin("three_holes")
        path = tmp_path / "s.json"
        path.write_text(sc.dumps())
        again = load_scene(str(path))
        assert again.to_dict() == sc.to_dict()

    @pytest.mark.parametrize("doc, field", [
        (_doc(colour="red"), "colour"),
        (_doc(version=7), "version"),
        (_doc(flow={"vx": "0", "vy": "1"}), "flow.f"),
        (_doc(flow={"vx": "0", "vy": "1", "f": "y +"}), "flow.f"),
        (_doc(flow={"vx": "t", "vy": "1", "f": "y"}), "flow.vx"),
        (_doc(density=-3), "scene.density"),
        (_doc(tolerances={"boundary": 0}), "tolerances.boundary"),
        (_doc(tolerances={"speed": 1}), "tolerances.speed"),
        (_doc(grids={"phi": 1}), "grids.phi"),
        (_doc(seed="x"), "seed"),
        (_doc(domain={"outer": {"kind": "circle", "center": [0, 0], "radius": -2}}), "domain.outer"),
        (_doc(domain={"outer": {"kind": "circle", "center": [0, 0], "radius": 2},
                      "holes": [{"kind": "circle", "center": [5, 0], "radius": 1}]}), "domain"),
    ])
    def test_errors_name_the_field(self, doc, field):
        with pytest.raises(SceneError) as exc:
            scene_from_dict(doc)
        assert exc.value.field == field

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  \"name\": ,\n}")
        with pytest.raises(SceneError) as exc:
            load_scene(str(path))
        assert exc.value.field == "<syntax>" and "line 2" in str(exc.value)

    def test_holes_are_reoriented(self):
        doc = _doc()
        doc["domain"]["holes"][0]["orientation"] = 1
        assert scene_from_dict(doc).domain.holes[0].orientation == -1


class TestRotation:
    def test_rotated_annulus(self):
        sc = builtin("two_holes")
        sc2, phi = rotated(sc, 0.7)
        assert sc2.flow.v(0.0, 0.0) == pytest.approx((-math.sin(0.7), math.cos(0.7)))
        c0 = sc.domain.holes[0].center
        c1 = sc2.domain.holes[0].center
        assert math.hypot(*c1) == pytest.approx(math.hypot(*c0))
        assert phi(BoundaryPoint(1, 0.0)).t == pytest.approx(0.7 / (2 * math.pi))
        assert check_traversing(sc2.domain, sc2.flow).ok

    def test_ellipse_unsupported(self):
        with pytest.raises(Exception):
            rotated(builtin("ellipse"), 0.3)
