import csv
import json
import subprocess
import sys

import pydot
import pytest

from pomdp_manip.cli import main


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def strip_time(rows):
    return [{k: v for k, v in r.items() if k != "wall_time_s"} for r in rows]


def write_scene(path, objects, contacts=()):
    path.write_text(json.dumps({"objects": objects, "contacts": list(contacts)}))
    return str(path)


# validate-scene ----------------------------------------------------------------------


def test_validate_bundled_scene(capsys):
    assert main(["validate-scene", "--scene", "scene01"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("object ") for line in out) == 8
    assert out[-1].startswith("valid: 8 objects")


def test_validate_reports_ratio(tmp_path, capsys):
    scene = write_scene(
        tmp_path / "s.json",
        [{"id": 1, "centroid": [0, 0], "perimeter": 50}, {"id": 2, "centroid": [0.2, 0], "perimeter": 100}],
        [{"occluder": 1, "occluded": 2, "tou": 20}],
    )
    assert main(["validate-scene", "--scene", scene]) == 0
    assert "object 2: occlusion 0.2500" in capsys.readouterr().out


def test_validate_reports_merges(tmp_path, capsys):
    scene = write_scene(
        tmp_path / "m.json",
        [{"id": 1, "centroid": [0, 0], "perimeter": 200}, {"id": 2, "centroid": [0.05, 0], "perimeter": 160}],
        [{"occluder": 1, "occluded": 2, "tou": 60}],
    )
    assert main(["validate-scene", "--scene", scene]) == 0
    out = capsys.readouterr().out
    assert "merged 2 into 1" in out and "merged object 1" in out


def test_validate_dangling_contact(tmp_path, capsys):
    scene = write_scene(tmp_path / "bad.json", [{"id": 1, "centroid": [0, 0], "perimeter": 50}], [{"occluder": 1, "occluded": 4, "tou": 1}])
    assert main(["validate-scene", "--scene", scene]) == 2
    assert "unknown object 4" in capsys.readouterr().err


# usage errors ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--out", "x.csv", "--bogus"],
        ["simulate", "--out", "x.csv", "--method", "random"],
        ["simulate", "--out", "x.csv", "--episodes", "0"],
        ["simulate"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_1_without_output(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1
    assert list(tmp_path.iterdir()) == []


def test_console_entry_point_exit_codes(tmp_path):
    run = lambda *a: subprocess.run([sys.executable, "-m", "pomdp_manip.cli", *a], capture_output=True, text=True, cwd=tmp_path)
    assert run("simulate", "--nope").returncode == 1
    assert run("validate-scene", "--scene", "no_such_scene").returncode == 2
    assert run("validate-scene", "--scene", "occluded_dirty_cup").returncode == 0


# simulate -------------------------------------------------------------------------------


def test_simulate_greedy_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["simulate", "--method", "greedy", "--episodes", "1", "--seed", "7", "--out", str(out)]) == 0
    assert strip_time(read_csv(a)) == strip_time(read_csv(b))
    rows = read_csv(a)
    assert rows[0]["method"] == "greedy" and rows[0]["episodes"] == "1"
    assert "mean" in capsys.readouterr().out


def test_simulate_defaults():
    from pomdp_manip.cli import build_parser

    args = build_parser().parse_args(["simulate", "--out", "x"])
    assert (args.episodes, args.horizon, args.width, args.particles, args.steps) == (100, 3, 3, 2000, 10)


def test_simulate_pomdp_horizon_one(tmp_path):
    out = tmp_path / "p.csv"
    argv = ["simulate", "--scene", "occluded_dirty_cup", "--method", "pomdp", "--horizon", "1", "--particles", "200"]
    assert main(argv + ["--episodes", "2", "--out", str(out)]) == 0
    assert read_csv(out)[0]["method"].startswith("pomdp-T1")


def test_simulate_unknown_scene(tmp_path):
    assert main(["simulate", "--scene", "nowhere", "--out", str(tmp_path / "x.csv")]) == 2
    assert not (tmp_path / "x.csv").exists()


# compare ----------------------------------------------------------------------------------


def test_compare_rows_and_p_value(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenes": ["occluded_dirty_cup"], "methods": ["greedy", "greedy-nohist"], "episodes_per_cell": 20}))
    out = tmp_path / "c.csv"
    assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 3
    assert rows[2]["scene"] == "pooled"
    # both greedy variants act identically here: the rewards match exactly
    assert float(rows[2]["p_value"]) == pytest.approx(1.0)


def test_compare_history_helps_on_front_row_scene(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenes": ["scene03"], "methods": ["greedy", "greedy-nohist"], "episodes_per_cell": 400}))
    out = tmp_path / "c.csv"
    assert main(["compare", "--config", str(cfg), "--out", str(out)]) == 0
    rows = {r["method"]: float(r["mean_reward"]) for r in read_csv(out)[:2]}
    assert rows["greedy"] >= rows["greedy-nohist"]


def test_compare_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"scenes": ["scene01"], "nonsense": true}')
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    assert not (tmp_path / "o.csv").exists()


# export-policy -----------------------------------------------------------------------------


def nodes_of(graph):
    out = list(graph.get_nodes())
    for sub in graph.get_subgraphs():
        out.extend(nodes_of(sub))
    return [n for n in out if n.get_name() not in ("node", "edge", "graph")]


def test_export_policy_single_layer(tmp_path):
    out = tmp_path / "p.dot"
    assert main(["export-policy", "--scene", "occluded_dirty_cup", "--horizon", "1", "--particles", "200", "--rounds", "2", "--out", str(out)]) == 0
    (g,) = pydot.graph_from_dot_data(out.read_text())
    assert len(nodes_of(g)) == 3 and not g.get_edges()


def test_export_policy_labels_and_determinism(tmp_path):
    paths = [tmp_path / "a.dot", tmp_path / "b.dot"]
    for p in paths:
        assert main(["export-policy", "--scene", "occluded_dirty_cup", "--particles", "300", "--rounds", "3", "--seed", "2", "--out", str(p)]) == 0
    text = paths[0].read_text()
    assert text == paths[1].read_text()
    (g,) = pydot.graph_from_dot_data(text)
    labels = [n.get("label") or "" for n in nodes_of(g)]
    assert any("(1.00)" in l and "R=" in l for l in labels)
    assert g.get_edges()
