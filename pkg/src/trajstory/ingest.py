"""Parse trajectory datasets and pull out the pieces the pipeline needs.

Two source schemas:

* ``kaggle_porto`` -- the taxi trip CSV export. Header row with a POLYLINE
  column holding a bracketed list of ``[lon, lat]`` pairs. Only TRIP_ID,
  TIMESTAMP and POLYLINE are consumed; rows flagged MISSING_DATA are skipped.
* ``point_list`` -- one ``lon,lat`` pair per line (header optional), the
  whole file being a single trajectory.

Rows that cannot yield a usable trajectory (empty or malformed polyline,
fewer than 2 points, coordinates outside WGS84 range, MISSING_DATA flag) are
counted in ``skipped_rows``, never silently dropped. Real GPS exports are
dirty; a bad row is data about the data.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from typing import IO, Iterable

from .errors import ConfigurationError, NotFoundError, ParseError
from .geo import GeoPoint, haversine_distance

SCHEMAS = ("kaggle_porto", "point_list")
SELECTION_CRITERIA = ("longest_by_points", "longest_by_length", "by_id")

KAGGLE_COLUMNS = ("TRIP_ID", "CALL_TYPE", "ORIGIN_CALL", "ORIGIN_STAND",
                  "TAXI_ID", "TIMESTAMP", "DAY_TYPE", "MISSING_DATA", "POLYLINE")


@dataclass
class Trajectory:
    """One GPS trace. ``points`` keeps source order; consumers get >= 2 points."""

    id: str
    points: list[GeoPoint]
    start_time: int | None = None
    sample_interval: float | None = None

    def path_length_m(self) -> float:
        return sum(haversine_distance(a, b) for a, b in zip(self.points, self.points[1:]))


@dataclass
class Dataset:
    trajectories: list[Trajectory] = field(default_factory=list)
    source_path: str = ""
    skipped_rows: int = 0


def _parse_point(lon, lat) -> GeoPoint | None:
    try:
        return GeoPoint(float(lon), float(lat))
    except (TypeError, ValueError):
        return None


def _parse_polyline(raw: str) -> list[GeoPoint] | None:
    """Decode a bracketed [[lon,lat],...] list; None if anything is off."""
    try:
        pairs = json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        return None
    if not isinstance(pairs, list):
        return None
    points = []
    for pair in pairs:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            return None
        p = _parse_point(pair[0], pair[1])
        if p is None:
            return None
        points.append(p)
    return points


def _parse_kaggle(stream: IO[str], source_path: str) -> Dataset:
    import csv

    reader = csv.DictReader(stream)
    if reader.fieldnames is None or "POLYLINE" not in reader.fieldnames:
        raise ParseError("kaggle_porto header is missing the POLYLINE column")
    ds = Dataset(source_path=source_path)
    for row in reader:
        if (row.get("MISSING_DATA") or "").strip().lower() == "true":
            ds.skipped_rows += 1
            continue
        points = _parse_polyline(row.get("POLYLINE") or "")
        if points is None or len(points) < 2:
            ds.skipped_rows += 1
            continue
        trip_id = (row.get("TRIP_ID") or "").strip() or f"row{reader.line_num}"
        start_time = None
        ts = (row.get("TIMESTAMP") or "").strip()
        if ts:
            try:
                start_time = int(ts)
            except ValueError:
                start_time = None
        ds.trajectories.append(Trajectory(id=trip_id, points=points, start_time=start_time))
    return ds


def _parse_point_list(stream: IO[str], source_path: str) -> Dataset:
    ds = Dataset(source_path=source_path)
    points = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        p = _parse_point(parts[0], parts[1]) if len(parts) == 2 else None
        if p is None:
            # a header line ("lon,lat") lands here too, which is fine
            ds.skipped_rows += 1
            continue
        points.append(p)
    if len(points) >= 2:
        name = os.path.splitext(os.path.basename(source_path))[0] or "trajectory"
        ds.trajectories.append(Trajectory(id=name, points=points))
    return ds


def parse_dataset(source: str | IO[str], schema: str) -> Dataset:
    """Parse ``source`` (path or text stream) under the given schema.

    For kaggle_porto, skipped_rows + len(trajectories) equals the number of
    data rows. For point_list, rows are points: the file parses to at most
    one trajectory and skipped_rows counts unparseable lines.
    """
    if schema not in SCHEMAS:
        raise ConfigurationError(f"unknown dataset schema {schema!r}; expected one of {SCHEMAS}")
    parser = _parse_kaggle if schema == "kaggle_porto" else _parse_point_list
    if isinstance(source, str):
        with open(source, encoding="utf-8", newline="") as fh:
            return parser(fh, source)
    return parser(source, getattr(source, "name", "<stream>"))


def trip_endpoints(ds: Dataset) -> list[GeoPoint]:
    """Final point of each trajectory, dataset order preserved."""
    return [t.points[-1] for t in ds.trajectories]


def select_trajectory(ds: Dataset, criterion: str, trajectory_id: str | None = None) -> Trajectory:
    """Pick one trajectory. Ties on the longest_* criteria break to the lowest id."""
    if criterion not in SELECTION_CRITERIA:
        raise ConfigurationError(
            f"unknown selection criterion {criterion!r}; expected one of {SELECTION_CRITERIA}")
    if not ds.trajectories:
        raise ValueError("cannot select from an empty dataset")
    if criterion == "by_id":
        if trajectory_id is None:
            raise ConfigurationError("selection criterion by_id needs a trajectory id")
        for t in ds.trajectories:
            if t.id == trajectory_id:
                return t
        raise NotFoundError(f"no trajectory with id {trajectory_id!r}")
    if criterion == "longest_by_points":
        metric = lambda t: len(t.points)  # noqa: E731
    else:
        metric = lambda t: t.path_length_m()  # noqa: E731
    best = ds.trajectories[0]
    best_m = metric(best)
    for t in ds.trajectories[1:]:
        m = metric(t)
        if m > best_m or (m == best_m and t.id < best.id):
            best, best_m = t, m
    return best


def to_point_list(traj: Trajectory) -> str:
    """Serialize to point_list text; floats round-trip exactly via repr."""
    return "".join(f"{p.lon!r},{p.lat!r}\n" for p in traj.points)


def write_point_list(traj: Trajectory, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_point_list(traj))


def trajectory_digest(traj: Trajectory) -> str:
    """Deterministic plain-text summary of one trajectory for prompting."""
    start, end = traj.points[0], traj.points[-1]
    lines = [
        f"trajectory id: {traj.id}",
        f"points: {len(traj.points)}",
        f"start: ({start.lon:.4f}, {start.lat:.4f})",
        f"end: ({end.lon:.4f}, {end.lat:.4f})",
        f"path length: {traj.path_length_m():.0f} m",
    ]
    if traj.start_time is not None:
        lines.insert(1, f"start time (unix): {traj.start_time}")
    return "\n".join(lines) + "\n"


def point_list_round_trip(traj: Trajectory) -> Trajectory:
    """Serialize then re-parse; used by tests to pin the round-trip contract."""
    ds = parse_dataset(io.StringIO(to_point_list(traj)), "point_list")
    return ds.trajectories[0]


def iter_points(trajectories: Iterable[Trajectory]) -> Iterable[GeoPoint]:
    for t in trajectories:
        yield from t.points
