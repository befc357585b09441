"""Trajectory CSV export and import."""
from __future__ import annotations

import csv
import io

import numpy as np

NODE_COLUMNS = ["step", "node_id", "x", "y"]
ELLIPSE_COLUMNS = ["step", "ellipse_x", "ellipse_y", "ellipse_angle"]


def write_trajectory_csv(path_or_file, positions, ellipse=None, stride: int = 1, springs=None, ellipse_axes=None, header: str = ""):
    """Write one row per (record, node), then, after a blank line, one row per
    record of ellipse pose when ``ellipse`` is given.

    ``springs`` (pairs of node ids) and ``ellipse_axes`` are written as
    comment lines so the renderer can draw edges and the object outline.
    """
    positions = np.asarray(positions)
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        fh.write(header)
        if springs is not None:
            fh.write("# springs " + " ".join(f"{int(a)}-{int(b)}" for a, b in springs) + "\n")
        if ellipse_axes is not None:
            fh.write("# ellipse_axes {:.17g} {:.17g}\n".format(*ellipse_axes))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NODE_COLUMNS)
        for r, frame in enumerate(positions):
            for n, (px, py) in enumerate(frame):
                w.writerow([r * stride, n, repr(float(px)), repr(float(py))])
        if ellipse is not None:
            fh.write("\n")
            w.writerow(ELLIPSE_COLUMNS)
            for r, (ex, ey, ea) in enumerate(np.asarray(ellipse)):
                w.writerow([r * stride, repr(float(ex)), repr(float(ey)), repr(float(ea))])
    finally:
        if own:
            fh.close()


class MalformedTrajectory(ValueError):
    pass


def read_trajectory_csv(path):
    """Parse a trajectory export.

    Returns ``(steps, positions[records, n, 2], ellipse or None, springs, axes)``.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    springs, axes = None, None
    lines = []
    for line in text.splitlines():
        if line.startswith("# springs"):
            springs = [tuple(int(v) for v in tok.split("-")) for tok in line.split()[2:]]
        elif line.startswith("# ellipse_axes"):
            axes = tuple(float(v) for v in line.split()[2:4])
        elif not line.startswith("#"):
            lines.append(line)
    blocks = "\n".join(lines).strip().split("\n\n")
    rows = list(csv.reader(io.StringIO(blocks[0])))
    if not rows or rows[0] != NODE_COLUMNS:
        raise MalformedTrajectory(f"expected header {NODE_COLUMNS}")
    frames: dict[int, list] = {}
    try:
        for row in rows[1:]:
            step, node, px, py = int(row[0]), int(row[1]), float(row[2]), float(row[3])
            frames.setdefault(step, []).append((node, px, py))
    except (ValueError, IndexError) as e:
        raise MalformedTrajectory(str(e)) from e
    steps = sorted(frames)
    counts = {len(frames[s]) for s in steps}
    if len(counts) != 1:
        raise MalformedTrajectory("node count differs between frames")
    pos = np.array([[(px, py) for _, px, py in sorted(frames[s])] for s in steps])
    ellipse = None
    if len(blocks) > 1:
        erows = list(csv.reader(io.StringIO(blocks[1])))
        if erows[0] != ELLIPSE_COLUMNS:
            raise MalformedTrajectory(f"expected header {ELLIPSE_COLUMNS}")
        ellipse = np.array([[float(v) for v in r[1:]] for r in erows[1:]])
        if len(ellipse) != len(steps):
            raise MalformedTrajectory("ellipse record count differs from node frames")
    return np.array(steps), pos, ellipse, springs, axes
