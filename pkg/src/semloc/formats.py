"""Line-oriented text formats for maps, observation streams and trajectories.

Every file starts with a ``<kind> <version>`` header line followed by
``key value...`` header lines, then one record per line. Blank lines and
lines starting with ``#`` are ignored. Floats are written with ``repr`` so a
write/read round trip is exact.

Map::

    semloc-map 1
    frame reference
    classes car sign
    <id> <class name> <x> <y> <z>

Observations (body frame, grouped by step)::

    semloc-observations 1
    classes car sign
    <step> <id> <class name> <x> <y> <z>

Trajectory (poses; rotation matrix row-major)::

    semloc-trajectory 1
    frame odometry
    <step> <timestamp> <x> <y> <z> <r00> <r01> ... <r22>
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FRAME_VEHICLE, ObjectMap, RigidTransform, SemlocError

FORMAT_VERSION = 1
MAP_KIND = "semloc-map"
OBSERVATIONS_KIND = "semloc-observations"
TRAJECTORY_KIND = "semloc-trajectory"


class FormatError(SemlocError):
    """A file could not be parsed; the message names the file and line."""

    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class _Parsed:
    headers: dict[str, list[str]]
    records: list[tuple[int, list[str]]]  # (line number, fields)


def _parse(path, kind: str, header_keys: tuple[str, ...]) -> _Parsed:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(path, 0, f"cannot read file ({exc.strerror})") from None
    headers: dict[str, list[str]] = {}
    records = []
    seen_kind = False
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if not seen_kind:
            if fields[0] != kind:
                raise FormatError(path, no, f"expected header {kind!r}, found {fields[0]!r}")
            if len(fields) != 2 or fields[1] != str(FORMAT_VERSION):
                raise FormatError(path, no, f"unsupported version (expected {kind} {FORMAT_VERSION})")
            seen_kind = True
            continue
        if fields[0] in header_keys and not records:
            headers[fields[0]] = fields[1:]
            continue
        records.append((no, fields))
    if not seen_kind:
        raise FormatError(path, 1, f"empty file, expected header {kind!r}")
    return _Parsed(headers, records)


def _floats(path, no: int, fields: list[str], what: str) -> list[float]:
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise FormatError(path, no, f"{what}: not a number in {fields}") from None
    if not all(np.isfinite(vals)):
        raise FormatError(path, no, f"{what}: non-finite value")
    return vals


def _int(path, no: int, field: str, what: str) -> int:
    try:
        return int(field)
    except ValueError:
        raise FormatError(path, no, f"{what}: expected an integer, found {field!r}") from None


def _class_table(path, parsed: _Parsed) -> list[str]:
    names = parsed.headers.get("classes")
    if names is None:
        raise FormatError(path, 1, "missing 'classes' header line")
    if len(set(names)) != len(names):
        raise FormatError(path, 1, "duplicate class names in 'classes' header")
    return names


def default_class_names(n: int) -> list[str]:
    return [f"class{i}" for i in range(n)]


# --------------------------------------------------------------------------
# maps
# --------------------------------------------------------------------------


def write_map(path, m: ObjectMap, class_names=None) -> None:
    names = list(class_names) if class_names is not None else default_class_names(
        int(m.class_ids.max()) + 1 if len(m) else 0)
    lines = [f"{MAP_KIND} {FORMAT_VERSION}", f"frame {m.frame}", " ".join(["classes", *names])]
    for i, c, p in zip(m.ids, m.class_ids, m.centroids):
        lines.append(f"{int(i)} {names[int(c)]} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_map(path) -> tuple[ObjectMap, list[str]]:
    """Returns the map and its class-name table (index = class id)."""
    parsed = _parse(path, MAP_KIND, ("frame", "classes"))
    names = _class_table(path, parsed)
    lookup = {n: i for i, n in enumerate(names)}
    frame = parsed.headers.get("frame", ["reference"])[0]
    ids, cls, pts = [], [], []
    seen = set()
    for no, f in parsed.records:
        if len(f) != 5:
            raise FormatError(path, no, f"map record needs 5 fields (id class x y z), found {len(f)}")
        oid = _int(path, no, f[0], "object id")
        if oid in seen:
            raise FormatError(path, no, f"duplicate object id {oid}")
        seen.add(oid)
        if f[1] not in lookup:
            raise FormatError(path, no, f"unknown class {f[1]!r}")
        ids.append(oid)
        cls.append(lookup[f[1]])
        pts.append(_floats(path, no, f[2:], "centroid"))
    return ObjectMap(np.array(pts).reshape(-1, 3), cls, ids, frame=frame), names


# --------------------------------------------------------------------------
# observations
# --------------------------------------------------------------------------


def write_observations(path, batches, class_names) -> None:
    names = list(class_names)
    lines = [f"{OBSERVATIONS_KIND} {FORMAT_VERSION}", " ".join(["classes", *names])]
    for step, b in enumerate(batches):
        for i, c, p in zip(b.ids, b.class_ids, b.centroids):
            lines.append(f"{step} {int(i)} {names[int(c)]} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_observations(path, n_steps: int, class_names=None) -> list[ObjectMap]:
    """One body-frame batch per step (empty where a step has no records).

    When ``class_names`` is given, the file's class names are mapped onto
    that table (typically the reference map's) so class ids agree.
    """
    parsed = _parse(path, OBSERVATIONS_KIND, ("classes",))
    names = _class_table(path, parsed)
    table = list(class_names) if class_names is not None else names
    lookup = {n: i for i, n in enumerate(table)}
    per_step: list[list] = [[] for _ in range(n_steps)]
    last_step = -1
    for no, f in parsed.records:
        if len(f) != 6:
            raise FormatError(path, no, f"observation record needs 6 fields (step id class x y z), found {len(f)}")
        step = _int(path, no, f[0], "step")
        if not 0 <= step < n_steps:
            raise FormatError(path, no, f"step {step} outside the trajectory (0..{n_steps - 1})")
        if step < last_step:
            raise FormatError(path, no, "records must be sorted by step")
        last_step = step
        if f[2] not in names:
            raise FormatError(path, no, f"unknown class {f[2]!r}")
        if f[2] not in lookup:
            raise FormatError(path, no, f"class {f[2]!r} does not occur in the reference map")
        per_step[step].append((_int(path, no, f[1], "object id"), lookup[f[2]], _floats(path, no, f[3:], "centroid")))
    out = []
    for recs in per_step:
        if not recs:
            out.append(ObjectMap.empty(FRAME_VEHICLE))
            continue
        out.append(ObjectMap(np.array([r[2] for r in recs]), [r[1] for r in recs], [r[0] for r in recs],
                             frame=FRAME_VEHICLE))
    return out


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------


def write_trajectory(path, timestamps, poses, frame: str) -> None:
    lines = [f"{TRAJECTORY_KIND} {FORMAT_VERSION}", f"frame {frame}"]
    for step, (ts, pose) in enumerate(zip(timestamps, poses)):
        vals = [*pose.translation, *pose.rotation.ravel()]
        lines.append(f"{step} {_fmt(ts)} " + " ".join(_fmt(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory(path) -> tuple[np.ndarray, list[RigidTransform], str]:
    """(timestamps, poses, frame tag). Steps must be 0, 1, 2, ... in order
    and timestamps non-decreasing."""
    parsed = _parse(path, TRAJECTORY_KIND, ("frame",))
    frame = parsed.headers.get("frame", ["odometry"])[0]
    ts, poses = [], []
    for no, f in parsed.records:
        if len(f) != 14:
            raise FormatError(path, no, f"pose record needs 14 fields (step t x y z r00..r22), found {len(f)}")
        step = _int(path, no, f[0], "step")
        if step != len(poses):
            raise FormatError(path, no, f"expected step {len(poses)}, found {step}")
        vals = _floats(path, no, f[1:], "pose")
        if ts and vals[0] < ts[-1]:
            raise FormatError(path, no, "timestamps must be non-decreasing")
        try:
            pose = RigidTransform(np.array(vals[4:]).reshape(3, 3), vals[1:4])
        except ValueError as exc:
            raise FormatError(path, no, f"invalid pose: {exc}") from None
        ts.append(vals[0])
        poses.append(pose)
    return np.array(ts, dtype=float), poses, frame
