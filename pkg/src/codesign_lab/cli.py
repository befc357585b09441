"""``codesign-lab`` command line: optimize, analyze, landscape, budget-study, render."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .core import InvalidArgument, TaskHandle, sample_uniform, substream
from .diffsim.export import MalformedTrajectory, read_trajectory_csv, write_trajectory_csv
from .landscape import DegenerateSpectrum, analyze_region, harvest_regions, slice_grid
from .optimizers import RunRecord, make_optimizer, restart_loop
from .svg import Viewport, frame_svg, heatmap, line_chart, scatter_chart

# substream keys per consumer
RUN_STREAM, REGION_STREAM, UNIFORM_STREAM, BUDGET_STREAM = 1, 2, 3, 4


class Context:
    def __init__(self, cfg: dict, workers: int, out: Path):
        self.cfg = cfg
        self.seed = int(cfg["seed"])
        self.workers = workers
        self.out = out
        self._task = None

    @property
    def header(self) -> str:
        return f"# codesign-lab {__version__} seed={self.seed}\n# config={cfgmod.snapshot(self.cfg)}\n"

    @property
    def meta(self) -> dict:
        return {"version": __version__, "seed": self.seed, "config": json.loads(cfgmod.snapshot(self.cfg))}

    @property
    def task(self) -> TaskHandle:
        if self._task is None:
            from .tasks import build_task

            self._task = build_task(self.cfg["task"], self.seed, self.cfg["steps"])
        return self._task

    @property
    def task_dir(self) -> Path:
        return self.out / self.task.name

    def map(self, fn, items):
        """Ordered results; work runs on the pool, files are written by the caller."""
        if self.workers <= 1:
            for it in items:
                yield fn(it)
            return
        with ThreadPoolExecutor(self.workers) as ex:
            futures = [ex.submit(fn, it) for it in items]
            try:
                for f in futures:
                    yield f.result()
            except BaseException:
                for f in futures:
                    f.cancel()
                raise


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(path: Path, obj) -> None:
    write_text(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def csv_text(header: str, columns: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def labels(cfg) -> list[tuple[str, dict]]:
    return [(a.get("label", a["name"]), a) for a in cfg["algorithms"]]


# optimize ------------------------------------------------------------------

def cmd_optimize(ctx: Context) -> int:
    cfg = ctx.cfg
    task = ctx.task
    cells = [(label, alg, k) for label, alg in labels(cfg) for k in range(int(cfg["seeds"]))]
    opts = {label: make_optimizer(alg["name"], cfgmod.algorithm_params(cfg, alg)) for label, alg in labels(cfg)}

    def run(cell):
        label, _, k = cell
        return opts[label].run(task, substream(ctx.seed, RUN_STREAM, k), log_points=bool(cfg["log_points"]), seed=k)

    done: dict[str, list[RunRecord]] = {}
    status = 0
    try:
        for (label, _, k), rec in zip(cells, ctx.map(run, cells)):
            d = ctx.task_dir / label / f"seed{k}"
            write_text(d / "run.csv", rec.to_csv(ctx.header))
            write_json(d / "record.json", {"_meta": ctx.meta, **rec.to_dict()})
            if rec.points is not None:
                write_text(d / "points.csv", rec.points_csv(ctx.header))
            done.setdefault(label, []).append(rec)
    except KeyboardInterrupt:
        status = 130
    write_summary(ctx, done)
    return status


def write_summary(ctx: Context, done: dict) -> None:
    summary = {"_meta": ctx.meta, "task": ctx.task.name, "algorithms": {}}
    series = {}
    for label, recs in done.items():
        finals = [r.final_best for r in recs]
        summary["algorithms"][label] = {
            "seeds": [r.seed for r in recs],
            "final_best_loss": finals,
            "mean": float(np.mean(finals)),
            "median": float(np.median(finals)),
            "min": float(np.min(finals)),
            "max": float(np.max(finals)),
            "evaluations": [r.total_evaluations for r in recs],
        }
        n = min(r.iterations for r in recs)
        mean = np.mean([r.best_loss[:n] for r in recs], axis=0)
        series[label] = (list(range(n)), list(mean))
    write_json(ctx.task_dir / "summary.json", summary)
    if series:
        svg = line_chart(series, f"{ctx.task.name}: mean best loss", "iteration", "best loss", comment=ctx.header)
        write_text(ctx.task_dir / "best_loss.svg", svg)


# analyze -------------------------------------------------------------------

def load_records(root: Path) -> list[RunRecord]:
    paths = sorted(root.glob("*/seed*/record.json"))
    return [RunRecord.from_dict(json.loads(p.read_text())) for p in paths]


def cmd_analyze(ctx: Context) -> int:
    a = ctx.cfg["analysis"]
    task = ctx.task
    n = int(a["regions"])
    if a["source"] == "runs":
        root = Path(a["runs_dir"] or ctx.out) / task.name
        records = load_records(root)
        if not records:
            raise InvalidArgument(f"no run records under {root}; run `optimize` first or set analysis.source = 'uniform'")
        means = harvest_regions(records, n, int(a["stride"]))
    else:
        means = list(sample_uniform(task.space, substream(ctx.seed, UNIFORM_STREAM), n))

    def one(item):
        i, mean = item
        try:
            return analyze_region(task, mean, float(a["sigma"]), int(a["N"]), substream(ctx.seed, REGION_STREAM, i))
        except DegenerateSpectrum as exc:
            return exc

    stats = list(ctx.map(one, list(enumerate(means))))
    ok = [(i, s) for i, s in enumerate(stats) if not isinstance(s, Exception)]
    d = ctx.task_dir / "analysis"
    spec_rows = [(i, k + 1, s.explained[k]) for i, s in ok for k in range(len(s.explained))]
    write_text(d / "eigenspectrum.csv", csv_text(ctx.header, ["region_id", "k", "cumulative_explained"], spec_rows))
    write_text(d / "ed.csv", csv_text(ctx.header, ["region_id", "best_loss", "ed"], [(i, s.best_loss, s.ed) for i, s in ok]))
    write_text(d / "alignment.csv", csv_text(ctx.header, ["region_id", "best_loss", "align_m", "align_c"], [(i, s.best_loss, s.align_m, 1.0 - s.align_m) for i, s in ok]))
    regions = []
    for i, s in enumerate(stats):
        if isinstance(s, Exception):
            regions.append({"region_id": i, "error": str(s)})
        else:
            regions.append({"region_id": i, **s.to_dict(full_eigvecs=bool(a["full_eigvecs"]))})
    write_json(d / "regions.json", {"_meta": ctx.meta, "regions": regions})

    m = task.space.m
    kk = list(range(1, m + 1))
    write_text(d / "eigenspectrum.svg", line_chart({f"region {i}": (kk, list(s.explained)) for i, s in ok}, f"{task.name}: cumulative explained variance", "eigenvalue index", "cumulative explained", comment=ctx.header))
    write_text(d / "ed.svg", scatter_chart({"regions": ([s.best_loss for _, s in ok], [s.ed for _, s in ok])}, f"{task.name}: effective dimensionality", "best loss", "ED", comment=ctx.header))
    write_text(d / "alignment.svg", scatter_chart({"morphology": ([s.best_loss for _, s in ok], [s.align_m for _, s in ok]), "control": ([s.best_loss for _, s in ok], [1.0 - s.align_m for _, s in ok])}, f"{task.name}: alignment", "best loss", "alignment ratio", comment=ctx.header))
    return 0 if len(ok) == len(stats) else 1


# landscape -----------------------------------------------------------------

def resolve_center(spec, space, region: dict | None = None) -> np.ndarray:
    if isinstance(spec, (list, tuple)):
        return space.check(np.asarray(spec, dtype=float))
    if spec == "baseline":
        return space.baseline.copy()
    if spec == "region":
        if region is None or region.get("mean") is None:
            raise InvalidArgument("center 'region' needs a region stats file with a mean")
        return space.check(np.asarray(region["mean"]))
    p = Path(str(spec))
    if not p.exists():
        raise InvalidArgument(f"center {spec!r}: expected 'baseline', 'region', a list, or a record.json path")
    d = json.loads(p.read_text())
    if d.get("best_x") is None:
        raise InvalidArgument(f"{p} has no best_x")
    return space.check(np.asarray(d["best_x"]))


def cmd_landscape(ctx: Context) -> int:
    ls = ctx.cfg["landscape"]
    task = ctx.task
    m = task.space.m
    region = None
    if ls["mode"] == "axes":
        i, j = (int(v) for v in ls["dims"])
        if i == j:
            raise InvalidArgument("axis-aligned slice needs two different parameter indices")
        if not (0 <= i < m and 0 <= j < m):
            raise InvalidArgument(f"dims must lie in [0, {m})")
        da, db = np.eye(m)[i], np.eye(m)[j]
        tag = f"axes {task.space.names[i]} / {task.space.names[j]}"
    else:
        if not ls["region_stats"]:
            raise InvalidArgument("eigenvector mode needs landscape.region_stats (regions.json written with full eigenvectors)")
        regions = json.loads(Path(ls["region_stats"]).read_text())["regions"]
        region = regions[int(ls["region"])]
        if "eigenvectors" not in region:
            raise InvalidArgument("region stats file has no eigenvectors; rerun analyze with --full-eigvecs")
        V = np.asarray(region["eigenvectors"])
        i, j = (int(v) for v in ls["eigvecs"])
        if i == j:
            raise InvalidArgument("eigenvector slice needs two different eigenvector indices")
        da, db = V[:, i], V[:, j]
        tag = f"eigenvectors v{i + 1} / v{j + 1}"
    center = resolve_center(ls["center"], task.space, region)
    alphas, betas, loss, div = slice_grid(task, center, da, db, float(ls["half_extent"]), int(ls["resolution"]))
    rows = [(alphas[a], betas[b], loss[a, b], int(div[a, b])) for a in range(len(alphas)) for b in range(len(betas))]
    d = ctx.task_dir / "landscape"
    write_text(d / "slice.csv", csv_text(ctx.header, ["alpha", "beta", "loss", "diverged"], rows))
    write_text(d / "slice.svg", heatmap(loss, alphas, betas, f"{task.name}: {tag}", comment=ctx.header, mask=div))
    return 0


# budget study --------------------------------------------------------------

def cmd_budget_study(ctx: Context) -> int:
    cfg = ctx.cfg
    b = cfg["budget_study"]
    task = ctx.task
    cells = []
    for label, alg in labels(cfg):
        key = alg["name"].lower().replace("-", "").replace("_", "")
        budget = int(alg.get("budget") or (b["gcpfo_budget"] if key == "gcpfo" else b["gcpfo_budget"] * b["multiplier"]))
        for k in range(int(cfg["seeds"])):
            cells.append((label, alg, budget, k))

    def run(cell):
        label, alg, budget, k = cell
        opt = make_optimizer(alg["name"], cfgmod.algorithm_params(cfg, alg))
        return restart_loop(opt, task, budget, substream(ctx.seed, BUDGET_STREAM, k), int(b["window"]), int(b["max_iterations"]), seed=k)

    curves: dict[str, list[RunRecord]] = {}
    summary = {"_meta": ctx.meta, "task": task.name, "algorithms": {}}
    for (label, _, budget, k), rec in zip(cells, ctx.map(run, cells)):
        restart_of = np.searchsorted(rec.restarts, np.arange(rec.iterations), side="right") - 1
        rows = [(t, e, bl, int(r)) for (t, e, bl, _), r in zip(rec.rows(), restart_of)]
        write_text(ctx.task_dir / "budget" / label / f"seed{k}" / "budget.csv", csv_text(ctx.header, ["iteration", "evaluations", "best_loss", "restart"], rows))
        curves.setdefault(label, []).append(rec)
        entry = summary["algorithms"].setdefault(label, {"budget": budget, "final_best_loss": [], "evaluations": [], "restarts": []})
        entry["final_best_loss"].append(rec.final_best)
        entry["evaluations"].append(rec.total_evaluations)
        entry["restarts"].append(len(rec.restarts))
    series = {}
    for label, recs in curves.items():
        n = min(r.iterations for r in recs)
        series[label] = (recs[0].evaluations[:n], list(np.mean([r.best_loss[:n] for r in recs], axis=0)))
    write_json(ctx.task_dir / "budget" / "summary.json", summary)
    write_text(ctx.task_dir / "budget" / "budget.svg", line_chart(series, f"{task.name}: best loss vs evaluations", "evaluations", "best loss", logx=True, comment=ctx.header))
    return 0


# render --------------------------------------------------------------------

def simulate_design(ctx: Context, path: Path) -> None:
    from .tasks.locomotion import LocomotionSpec, locomotion_trajectory
    from .tasks.manipulation import manipulation_trajectory

    r = ctx.cfg["render"]
    task = ctx.task
    x = resolve_center(r["design"], task.space)
    spec = task.metadata["spec"]
    stride = int(r["record_stride"])
    steps = spec.sim.steps
    stride = max(d for d in range(1, min(stride, steps) + 1) if steps % d == 0)
    if isinstance(spec, LocomotionSpec):
        traj, springs = locomotion_trajectory(spec, x, stride)
        axes = None
    else:
        traj, springs, axes = manipulation_trajectory(spec, x, ctx.seed, int(r["env"]), stride)
    ell = None if traj.ellipse is None else np.asarray(traj.ellipse)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(path, np.asarray(traj.positions), ell, traj.record_stride, springs, axes, header=ctx.header)


def render_frames(path, out_dir: Path, frame_every: int = 1, header: str = "") -> list[Path]:
    steps, pos, ellipse, springs, axes = read_trajectory_csv(path)
    pts = pos.reshape(-1, 2)
    if ellipse is not None and axes is not None:
        r = max(axes)
        pts = np.concatenate([pts, ellipse[:, :2] + r, ellipse[:, :2] - r])
    view = Viewport.fit(np.concatenate([pts, [[pts[:, 0].min(), 0.0]]]))
    written = []
    idx = list(range(0, len(steps), max(1, frame_every)))
    if idx[-1] != len(steps) - 1:
        idx.append(len(steps) - 1)
    for f in idx:
        e = None if ellipse is None else ellipse[f]
        svg = frame_svg(view, pos[f], springs, e, axes, comment=header, title=f"step {int(steps[f])}")
        p = out_dir / f"frame_{f:05d}.svg"
        write_text(p, svg)
        written.append(p)
    return written


def cmd_render(ctx: Context) -> int:
    r = ctx.cfg["render"]
    out_dir = ctx.out / "render"
    if r["trajectory"]:
        src = Path(r["trajectory"])
    else:
        src = ctx.task_dir / "render" / "trajectory.csv"
        simulate_design(ctx, src)
        out_dir = ctx.task_dir / "render"
    render_frames(src, out_dir, int(r["frame_every"]), ctx.header)
    return 0


# entry point ---------------------------------------------------------------

COMMANDS = {
    "optimize": cmd_optimize,
    "analyze": cmd_analyze,
    "landscape": cmd_landscape,
    "budget-study": cmd_budget_study,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="codesign-lab", description="Co-design landscape analysis and optimizer benchmarks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="TOML or JSON experiment config")
        s.add_argument("--seed", type=int, help="master seed (overrides config)")
        s.add_argument("--workers", type=int, help="worker threads (default: $CODESIGN_LAB_WORKERS or 1)")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--paper-scale", action="store_true", help="use the paper-scale preset")
        s.add_argument("--task")
        s.add_argument("--steps", type=int, help="simulation horizon override")
        if name == "analyze":
            s.add_argument("--regions", type=int)
            s.add_argument("--region-sigma", type=float)
            s.add_argument("--samples", type=int, help="gradients per region (N)")
            s.add_argument("--runs-dir")
            s.add_argument("--uniform", action="store_true", help="sample region means uniformly instead of from runs")
            s.add_argument("--full-eigvecs", action="store_true")
        if name == "landscape":
            s.add_argument("--dims", type=int, nargs=2)
            s.add_argument("--eigvecs", type=int, nargs=2)
            s.add_argument("--region-stats")
            s.add_argument("--region", type=int)
            s.add_argument("--center")
            s.add_argument("--resolution", type=int)
            s.add_argument("--half-extent", type=float)
        if name == "budget-study":
            s.add_argument("--gcpfo-budget", type=int)
            s.add_argument("--multiplier", type=float)
        if name == "render":
            s.add_argument("--trajectory")
            s.add_argument("--design")
            s.add_argument("--frame-every", type=int)
    return p


def _overrides(args) -> dict:
    o: dict = {"seed": args.seed, "task": args.task, "steps": args.steps}
    g = lambda name: getattr(args, name, None)  # noqa: E731
    o["analysis"] = {k: v for k, v in {
        "regions": g("regions"), "sigma": g("region_sigma"), "N": g("samples"), "runs_dir": g("runs_dir"),
        "source": "uniform" if g("uniform") else None, "full_eigvecs": True if g("full_eigvecs") else None,
    }.items() if v is not None}
    ls = {"resolution": g("resolution"), "half_extent": g("half_extent"), "region_stats": g("region_stats"), "region": g("region"), "center": g("center")}
    if g("dims"):
        ls.update(mode="axes", dims=g("dims"))
    if g("eigvecs"):
        ls.update(mode="eigvecs", eigvecs=g("eigvecs"))
    o["landscape"] = {k: v for k, v in ls.items() if v is not None}
    o["budget_study"] = {k: v for k, v in {"gcpfo_budget": g("gcpfo_budget"), "multiplier": g("multiplier")}.items() if v is not None}
    o["render"] = {k: v for k, v in {"trajectory": g("trajectory"), "design": g("design"), "frame_every": g("frame_every")}.items() if v is not None}
    return o


def workers_from(args) -> int:
    if args.workers is not None:
        n = args.workers
    else:
        env = os.environ.get("CODESIGN_LAB_WORKERS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise InvalidArgument(f"CODESIGN_LAB_WORKERS must be an integer, got {env!r}") from None
    if n < 1:
        raise InvalidArgument("workers must be >= 1")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = cfgmod.read_document(args.config) if args.config else {}
        if args.command == "render" and not (args.config or args.task):
            doc.setdefault("task", "none")  # rendering a CSV needs no task
        cfg = cfgmod.resolve(doc, _overrides(args), paper_scale=args.paper_scale)
        ctx = Context(cfg, workers_from(args), Path(args.out))
        return COMMANDS[args.command](ctx)
    except (ValueError, FileNotFoundError, KeyError) as exc:  # InvalidArgument, MalformedTrajectory, JSON errors
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"codesign-lab {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
