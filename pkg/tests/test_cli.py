import csv
import json
import re

import numpy as np
import pytest

from codesign_lab.cli import main, render_frames
from codesign_lab.diffsim import write_trajectory_csv
from codesign_lab.svg import Viewport

SMALL = """
task = "Loc84"
steps = 40
seeds = 2
iterations = 3
evals_per_iteration = 20

[[algorithms]]
name = "gcpfo"
params = { P = 10 }

[[algorithms]]
name = "adam"
params = { lr = 0.01 }

[analysis]
regions = 3
N = 12

[landscape]
resolution = 5
half_extent = 0.1

[budget_study]
gcpfo_budget = 60
multiplier = 2
max_iterations = 4
"""


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "small.toml"
    p.write_text(SMALL)
    return p


@pytest.fixture(scope="module")
def optimized(config, tmp_path_factory):
    out = tmp_path_factory.mktemp("opt")
    assert main(["optimize", "--config", str(config), "--out", str(out)]) == 0
    return out


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def csv_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_optimize_file_accounting(optimized):
    runs = sorted(optimized.glob("Loc84/*/seed*/run.csv"))
    assert len(runs) == 4
    assert (optimized / "Loc84" / "summary.json").exists()
    assert (optimized / "Loc84" / "best_loss.svg").exists()


def test_outputs_embed_seed_and_config(optimized):
    text = (optimized / "Loc84" / "gcpfo" / "seed0" / "run.csv").read_text()
    assert text.startswith("# codesign-lab ") and "seed=0" in text.splitlines()[0]
    assert '"evals_per_iteration":20' in text.splitlines()[1]
    assert "seed=0" in (optimized / "Loc84" / "best_loss.svg").read_text()
    assert json.loads((optimized / "Loc84" / "summary.json").read_text())["_meta"]["seed"] == 0


def test_summary_means_match_run_csvs(optimized):
    summary = json.loads((optimized / "Loc84" / "summary.json").read_text())
    for label in ("gcpfo", "adam"):
        finals = [float(read_rows(optimized / "Loc84" / label / f"seed{k}" / "run.csv")[-1]["best_loss"]) for k in range(2)]
        entry = summary["algorithms"][label]
        assert entry["mean"] == pytest.approx(np.mean(finals), rel=1e-15)
        assert entry["min"] == min(finals) and entry["max"] == max(finals)


def test_run_csv_accounting(optimized):
    rows = read_rows(optimized / "Loc84" / "gcpfo" / "seed1" / "run.csv")
    assert [int(r["evaluations"]) for r in rows] == [20, 40, 60]
    best = [float(r["best_loss"]) for r in rows]
    assert best == sorted(best, reverse=True)


def test_optimize_deterministic_across_workers(config, optimized, tmp_path):
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path), "--workers", "8"]) == 0
    assert csv_bytes(tmp_path) == csv_bytes(optimized)
    assert (tmp_path / "Loc84" / "summary.json").read_bytes() == (optimized / "Loc84" / "summary.json").read_bytes()


def test_workers_env_fallback(config, optimized, tmp_path, monkeypatch):
    monkeypatch.setenv("CODESIGN_LAB_WORKERS", "3")
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path)]) == 0
    assert csv_bytes(tmp_path) == csv_bytes(optimized)
    monkeypatch.setenv("CODESIGN_LAB_WORKERS", "many")
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path)]) == 2


def test_analyze_from_runs(config, optimized, tmp_path):
    assert main(["analyze", "--config", str(config), "--out", str(tmp_path), "--runs-dir", str(optimized)]) == 0
    d = tmp_path / "Loc84" / "analysis"
    ed = read_rows(d / "ed.csv")
    al = read_rows(d / "alignment.csv")
    assert len(ed) == 3 and len(al) == 3
    assert len(read_rows(d / "eigenspectrum.csv")) == 3 * 84
    assert all(1.0 <= float(r["ed"]) <= 84 for r in ed)
    assert all(float(r["align_m"]) + float(r["align_c"]) == 1.0 for r in al)
    for name in ("eigenspectrum.svg", "ed.svg", "alignment.svg", "regions.json"):
        assert (d / name).exists()


def test_analyze_deterministic_across_workers(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, w in ((a, "1"), (b, "8")):
        assert main(["analyze", "--config", str(config), "--out", str(out), "--uniform", "--workers", w]) == 0
    assert csv_bytes(a) == csv_bytes(b)


def test_analyze_without_runs_fails(config, tmp_path, capsys):
    assert main(["analyze", "--config", str(config), "--out", str(tmp_path)]) == 2
    assert "optimize" in capsys.readouterr().err


def test_landscape_axes(config, tmp_path):
    assert main(["landscape", "--config", str(config), "--out", str(tmp_path), "--dims", "0", "80"]) == 0
    d = tmp_path / "Loc84" / "landscape"
    rows = read_rows(d / "slice.csv")
    assert len(rows) == 25
    svg = (d / "slice.svg").read_text()
    cells = [float(v) for v in re.findall(r'data-loss="([^"]+)"', svg)]
    assert min(cells) == min(float(r["loss"]) for r in rows)


def test_landscape_default_resolution_has_2500_rows(config, tmp_path):
    assert main(["landscape", "--config", str(config), "--out", str(tmp_path), "--resolution", "50"]) == 0
    assert len(read_rows(tmp_path / "Loc84" / "landscape" / "slice.csv")) == 2500


def test_landscape_rejections(config, tmp_path, capsys):
    assert main(["landscape", "--config", str(config), "--out", str(tmp_path), "--dims", "0", "0"]) == 2
    assert main(["landscape", "--config", str(config), "--out", str(tmp_path), "--eigvecs", "0", "1"]) == 2
    assert "region_stats" in capsys.readouterr().err


def test_landscape_eigvecs_mode(config, tmp_path):
    assert main(["analyze", "--config", str(config), "--out", str(tmp_path), "--uniform", "--full-eigvecs", "--regions", "1"]) == 0
    stats = tmp_path / "Loc84" / "analysis" / "regions.json"
    assert main(["landscape", "--config", str(config), "--out", str(tmp_path), "--eigvecs", "0", "1", "--region-stats", str(stats), "--center", "region"]) == 0
    assert len(read_rows(tmp_path / "Loc84" / "landscape" / "slice.csv")) == 25


def test_budget_study_curves_end_at_budgets(config, tmp_path):
    # gcpfo: 60 evaluations; adam: 60 * 2 = 120
    assert main(["budget-study", "--config", str(config), "--out", str(tmp_path)]) == 0
    d = tmp_path / "Loc84" / "budget"
    for label, budget in (("gcpfo", 60), ("adam", 120)):
        for k in range(2):
            rows = read_rows(d / label / f"seed{k}" / "budget.csv")
            assert int(rows[-1]["evaluations"]) == budget
            best = [float(r["best_loss"]) for r in rows]
            assert best == list(np.minimum.accumulate(best))
    summary = json.loads((d / "summary.json").read_text())
    assert summary["algorithms"]["adam"]["budget"] == 120
    assert (d / "budget.svg").exists()


def test_bad_config_exits_nonzero(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('task = "Loc84"\nseeds = 0\n')
    assert main(["optimize", "--config", str(p), "--out", str(tmp_path)]) == 2
    p.write_text('{"task": "Nope"}')
    assert main(["optimize", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "unknown task" in capsys.readouterr().err


def test_json_config_accepted(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"task": "Loc84", "steps": 20, "seeds": 1, "iterations": 1, "evals_per_iteration": 10, "algorithms": [{"name": "ga"}]}))
    assert main(["optimize", "--config", str(p), "--out", str(tmp_path)]) == 0
    assert len(read_rows(tmp_path / "Loc84" / "ga" / "seed0" / "run.csv")) == 1


def test_render_single_frame(tmp_path):
    pos = np.array([[[0.0, 0.1], [0.3, 0.2], [0.1, 0.5]]])
    src = tmp_path / "one.csv"
    write_trajectory_csv(src, pos, None, stride=1, springs=[(0, 1), (1, 2)])
    assert main(["render", "--trajectory", str(src), "--out", str(tmp_path)]) == 0
    frames = sorted((tmp_path / "render").glob("*.svg"))
    assert len(frames) == 1


def test_render_node_mismatch(tmp_path, capsys):
    src = tmp_path / "bad.csv"
    src.write_text("step,node_id,x,y\n0,0,0.0,0.0\n0,1,1.0,0.0\n1,0,0.0,0.0\n")
    assert main(["render", "--trajectory", str(src), "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_rendered_coordinates_invert_to_csv(tmp_path):
    rng = np.random.default_rng(0)
    pos = rng.uniform(0.05, 0.6, (3, 5, 2))
    src = tmp_path / "t.csv"
    write_trajectory_csv(src, pos, None, stride=4, springs=[(0, 1)])
    paths = render_frames(src, tmp_path / "frames")
    assert len(paths) == 3
    pts = pos.reshape(-1, 2)
    view = Viewport.fit(np.concatenate([pts, [[pts[:, 0].min(), 0.0]]]))
    svg = paths[2].read_text()
    q = np.array([[float(a), float(b)] for a, b in re.findall(r'<circle id="n\d+" cx="([^"]+)" cy="([^"]+)"', svg)])
    assert np.abs(view.inverse(q) - pos[2]).max() < 1e-6 / view.scale * 10


def test_render_simulated_design(tmp_path):
    assert main(["render", "--task", "Loc84", "--steps", "32", "--frame-every", "2", "--out", str(tmp_path)]) == 0
    d = tmp_path / "Loc84" / "render"
    assert (d / "trajectory.csv").exists()
    assert len(list(d.glob("frame_*.svg"))) == 3  # records 0, 8, 16, 24, 32 -> frames 0, 2, 4
