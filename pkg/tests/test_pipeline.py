import json

import pytest

from hexforge.errors import StageError
from hexforge.pipeline import Pipeline
from helpers import pipeline_case


def test_runs_all_stages_then_skips(tmp_path):
    cfg = pipeline_case(tmp_path)
    p = Pipeline(cfg)
    out = p.run()
    assert out.name == "cube.spline.bext" and out.exists()
    assert p.executed == ["segment", "polycube", "map", "quality", "spline"]
    again = Pipeline(cfg)
    again.run()
    assert again.executed == []


def test_changed_refine_list_reruns_only_spline(tmp_path):
    cfg = pipeline_case(tmp_path)
    Pipeline(cfg).run()
    (tmp_path / "refine.txt").write_text("1\n")
    p = Pipeline(cfg)
    p.run()
    assert p.executed == ["spline"]


def test_changed_parameter_reruns_downstream(tmp_path):
    cfg = pipeline_case(tmp_path, refine=False)
    Pipeline(cfg).run()
    data = json.loads(cfg.read_text())
    data["map"]["level"] = 1
    cfg.write_text(json.dumps(data))
    p = Pipeline(cfg)
    p.run()
    assert p.executed == ["map", "quality", "spline"]


def test_stage_failure_names_stage(tmp_path):
    cfg = pipeline_case(tmp_path, refine=False)
    data = json.loads(cfg.read_text())
    (tmp_path / "empty.txt").write_text("")
    data["polycube"]["cells"] = "empty.txt"
    cfg.write_text(json.dumps(data))
    with pytest.raises(StageError) as info:
        Pipeline(cfg).run()
    assert info.value.stage == "polycube"
