import json

import pytest

from conftest import dataset
from holoflow.cli import EXIT_FAIL, EXIT_INPUT, EXIT_PASS, load_boundary_map, main, thread_count
from holoflow.errors import SceneError
from holoflow.geometry import BoundaryPoint
from holoflow.scenes import builtin


@pytest.fixture
def disk_file(tmp_path):
    path = tmp_path / "disk.jsonl"
    path.write_text(dataset("disk").dumps())
    return path


class TestRun:
    def test_disk_full_pipeline(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "disk", "--out", str(out)]) == EXIT_PASS
        names = {p.name for p in out.iterdir()}
        assert {"dataset.jsonl", "graph.json", "boundary.json", "report.json", "domain.svg"} <= names
        rep = json.loads((out / "report.json").read_text())
        assert rep["passed"] and rep["algebra"]
        assert "passed" in capsys.readouterr().out

    def test_stage_dependencies_are_pulled_in(self, tmp_path):
        out = tmp_path / "g"
        assert main(["run", "annulus", "--stages", "graph", "--no-figures", "--out", str(out)]) == EXIT_PASS
        rep = json.loads((out / "report.json").read_text())
        assert rep["stages"] == ["strata", "causality", "graph"]
        assert not any(p.suffix == ".svg" for p in out.iterdir())

    def test_bad_scene_file(self, tmp_path, capsys):
        doc = json.loads(builtin("disk").dumps())
        doc["flow"]["f"] = "y +"
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert main(["run", str(path)]) == EXIT_INPUT
        assert "flow.f" in capsys.readouterr().err

    def test_not_traversing_fails(self, tmp_path):
        doc = json.loads(builtin("disk").dumps())
        doc["flow"]["f"] = "x"
        path = tmp_path / "nt.json"
        path.write_text(json.dumps(doc))
        assert main(["run", str(path), "--no-figures", "--stages", "strata"]) == EXIT_FAIL


class TestVerify:
    @pytest.mark.parametrize("prop", ["monotone", "propertyA", "quotient"])
    def test_stored_dataset_passes(self, disk_file, prop):
        assert main(["verify", str(disk_file), "--property", prop]) == EXIT_PASS

    def test_tampered_record_is_reported(self, disk_file, capsys):
        lines = disk_file.read_text().splitlines()
        rec = json.loads(lines[11])
        rec["f_target"] = rec["f_source"] - 0.5
        lines[11] = json.dumps(rec)
        disk_file.write_text("\n".join(lines) + "\n")
        assert main(["verify", str(disk_file), "--property", "monotone"]) == EXIT_FAIL
        assert '"violations": [10]' in capsys.readouterr().out

    def test_conformal_needs_two_datasets(self, disk_file, tmp_path):
        assert main(["verify", str(disk_file), "--property", "conformal"]) == EXIT_INPUT
        other = tmp_path / "other.jsonl"
        other.write_text(dataset("disk").dumps())
        assert main(["verify", str(disk_file), "--property", "conformal", "--against", str(other)]) == EXIT_PASS

    def test_corrupt_and_foreign_files(self, disk_file, tmp_path):
        text = disk_file.read_text()
        disk_file.write_text(text.replace('"version":1', '"version":5', 1))
        assert main(["verify", str(disk_file), "--property", "monotone"]) == EXIT_INPUT
        broken = tmp_path / "broken.jsonl"
        broken.write_text(text.splitlines()[0] + "\n{not json\n")
        assert main(["verify", str(broken), "--property", "monotone"]) == EXIT_INPUT


class TestCompare:
    def test_identity_and_shift(self, tmp_path):
        out = tmp_path / "phi.json"
        assert main(["compare", "annulus", "annulus", "--map", "identity", "--grid", "8", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["commutation_error"] < 1e-9
        assert main(["compare", "annulus", "annulus", "--map", "shift:0.1,0", "--grid", "8"]) == EXIT_FAIL

    def test_map_files(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"kind": "shift", "offsets": [0.5]}))
        assert load_boundary_map(str(p))(BoundaryPoint(0, 0.75)).t == pytest.approx(0.25)
        p.write_text(json.dumps([[0, 0.0, 0, 0.0], [0, 0.5, 0, 0.5]]))
        assert load_boundary_map(str(p))(BoundaryPoint(0, 0.3)).t == pytest.approx(0.3)
        with pytest.raises(SceneError):
            load_boundary_map("shift:a,b")


class TestFuzz:
    def test_corpus(self, tmp_path):
        out = tmp_path / "corpus.json"
        assert main(["fuzz-conjecture", "disk", "--count", "2", "--seed", "4", "--out", str(out)]) == EXIT_PASS
        corpus = json.loads(out.read_text())
        assert [c["seed"] for c in corpus["candidates"]] == [4, 5]
        assert all(c["in_M_Cv"] for c in corpus["candidates"])


def test_thread_count(monkeypatch):
    monkeypatch.setenv("HOLOFLOW_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("HOLOFLOW_THREADS", "zero")
    with pytest.raises(SceneError):
        thread_count()
    assert main(["run", "disk", "--stages", "strata", "--no-figures"]) == EXIT_INPUT
