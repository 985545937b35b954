import csv
import io

import pytest
from hypothesis import given, strategies as st

from trajstory.errors import ConfigurationError, NotFoundError, ParseError
from trajstory.geo import GeoPoint
from trajstory.ingest import (Dataset, Trajectory, iter_points, parse_dataset,
                              point_list_round_trip, select_trajectory,
                              to_point_list, trajectory_digest, trip_endpoints,
                              write_point_list)
from trajstory.synth import SyntheticSpec, generate_dataset, write_kaggle_csv

HEADER = ["TRIP_ID", "CALL_TYPE", "ORIGIN_CALL", "ORIGIN_STAND", "TAXI_ID",
          "TIMESTAMP", "DAY_TYPE", "MISSING_DATA", "POLYLINE"]


def kaggle_csv(rows):
    """Rows are (trip_id, timestamp, missing, polyline_text) tuples."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(HEADER)
    for trip_id, ts, missing, poly in rows:
        writer.writerow([trip_id, "A", "", "", "20000542", ts, "A", missing, poly])
    buf.seek(0)
    return buf


GOOD_POLY = "[[-8.61,41.14],[-8.62,41.15],[-8.63,41.16]]"


class TestKaggleParsing:
    def test_unknown_schema_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_dataset(io.StringIO(""), "tsv")

    def test_missing_polyline_column(self):
        buf = io.StringIO("TRIP_ID,TIMESTAMP\n1,1372636858\n")
        with pytest.raises(ParseError):
            parse_dataset(buf, "kaggle_porto")

    def test_happy_path(self):
        ds = parse_dataset(kaggle_csv([("t1", "1372636858", "False", GOOD_POLY)]),
                           "kaggle_porto")
        assert len(ds.trajectories) == 1
        traj = ds.trajectories[0]
        assert traj.id == "t1"
        assert traj.start_time == 1372636858
        assert traj.points[0] == GeoPoint(-8.61, 41.14)
        assert traj.points[-1] == GeoPoint(-8.63, 41.16)
        assert ds.skipped_rows == 0

    def test_missing_data_flag_skips_row_case_insensitively(self):
        ds = parse_dataset(kaggle_csv([
            ("t1", "1", "True", GOOD_POLY),
            ("t2", "2", "TRUE", GOOD_POLY),
            ("t3", "3", "False", GOOD_POLY),
        ]), "kaggle_porto")
        assert [t.id for t in ds.trajectories] == ["t3"]
        assert ds.skipped_rows == 2

    @pytest.mark.parametrize("poly", [
        "[[-8.61,41.14],[",            # truncated JSON
        "[[-8.61,41.14]]",             # one point is not a path
        "[]",                          # empty
        "not json",
        "{\"lon\": 1}",                # wrong shape
        "[[-8.61,95.0],[-8.62,41.15]]",  # latitude out of range
        "[[-8.61],[-8.62,41.15]]",     # pair arity
    ])
    def test_unusable_polylines_are_counted_not_raised(self, poly):
        ds = parse_dataset(kaggle_csv([("bad", "1", "False", poly),
                                       ("ok", "2", "False", GOOD_POLY)]),
                           "kaggle_porto")
        assert [t.id for t in ds.trajectories] == ["ok"]
        assert ds.skipped_rows == 1

    def test_row_count_conservation(self):
        rows = [("a", "1", "False", GOOD_POLY),
                ("b", "2", "True", GOOD_POLY),
                ("c", "3", "False", "oops"),
                ("d", "4", "False", GOOD_POLY)]
        ds = parse_dataset(kaggle_csv(rows), "kaggle_porto")
        assert len(ds.trajectories) + ds.skipped_rows == len(rows)

    def test_blank_trip_id_gets_row_fallback(self):
        ds = parse_dataset(kaggle_csv([("", "1", "False", GOOD_POLY)]),
                           "kaggle_porto")
        assert ds.trajectories[0].id.startswith("row")

    def test_unparseable_timestamp_becomes_none(self):
        ds = parse_dataset(kaggle_csv([("t1", "later", "False", GOOD_POLY)]),
                           "kaggle_porto")
        assert ds.trajectories[0].start_time is None


class TestPointListParsing:
    def test_header_and_blanks_tolerated(self, tmp_path):
        path = tmp_path / "walk.txt"
        path.write_text("lon,lat\n-8.61,41.14\n\n-8.62,41.15\n-8.63,41.16\n")
        ds = parse_dataset(str(path), "point_list")
        assert len(ds.trajectories) == 1
        traj = ds.trajectories[0]
        assert traj.id == "walk"
        assert len(traj.points) == 3
        assert ds.skipped_rows == 1  # the header line

    def test_single_usable_point_yields_no_trajectory(self):
        ds = parse_dataset(io.StringIO("-8.61,41.14\n"), "point_list")
        assert ds.trajectories == []

    def test_malformed_lines_counted(self):
        ds = parse_dataset(io.StringIO("-8.61,41.14\nxyz\n-8.62;41.15\n-8.63,41.16\n"),
                           "point_list")
        assert ds.skipped_rows == 2
        assert len(ds.trajectories[0].points) == 2

    @given(points=st.lists(
        st.builds(GeoPoint,
                  st.floats(-8.75, -8.45, allow_nan=False),
                  st.floats(41.0, 41.3, allow_nan=False)),
        min_size=2, max_size=20))
    def test_serialization_round_trips_exactly(self, points):
        traj = Trajectory(id="t", points=points)
        back = point_list_round_trip(traj)
        assert [(p.lon, p.lat) for p in back.points] == \
               [(p.lon, p.lat) for p in points]

    def test_write_then_parse_from_disk(self, tmp_path):
        traj = Trajectory(id="t", points=[GeoPoint(-8.61, 41.14),
                                          GeoPoint(-8.62, 41.15)])
        path = tmp_path / "t.txt"
        write_point_list(traj, str(path))
        ds = parse_dataset(str(path), "point_list")
        assert trip_endpoints(ds) == [GeoPoint(-8.62, 41.15)]


class TestSelection:
    @staticmethod
    def dataset():
        short_far = Trajectory(id="b", points=[GeoPoint(-8.60, 41.10),
                                               GeoPoint(-8.60, 41.20)])
        long_near = Trajectory(id="a", points=[GeoPoint(-8.61, 41.14),
                                               GeoPoint(-8.611, 41.141),
                                               GeoPoint(-8.612, 41.142)])
        return Dataset(trajectories=[short_far, long_near])

    def test_unknown_criterion(self):
        with pytest.raises(ConfigurationError):
            select_trajectory(self.dataset(), "shortest")

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            select_trajectory(Dataset(), "longest_by_points")

    def test_longest_by_points_vs_length_disagree(self):
        ds = self.dataset()
        assert select_trajectory(ds, "longest_by_points").id == "a"
        assert select_trajectory(ds, "longest_by_length").id == "b"

    def test_tie_breaks_to_lowest_id(self):
        p = [GeoPoint(-8.61, 41.14), GeoPoint(-8.62, 41.15)]
        ds = Dataset(trajectories=[Trajectory(id="z", points=list(p)),
                                   Trajectory(id="a", points=list(p))])
        assert select_trajectory(ds, "longest_by_points").id == "a"

    def test_by_id(self):
        ds = self.dataset()
        assert select_trajectory(ds, "by_id", "b").id == "b"
        with pytest.raises(NotFoundError):
            select_trajectory(ds, "by_id", "nope")
        with pytest.raises(ConfigurationError):
            select_trajectory(ds, "by_id")


class TestDigest:
    def test_contents_and_determinism(self):
        traj = Trajectory(id="t9", points=[GeoPoint(-8.61, 41.14),
                                           GeoPoint(-8.63, 41.16)],
                          start_time=1372636858)
        digest = trajectory_digest(traj)
        assert digest == trajectory_digest(traj)
        assert "trajectory id: t9" in digest
        assert "start time (unix): 1372636858" in digest
        assert "points: 2" in digest
        assert "start: (-8.6100, 41.1400)" in digest
        assert "end: (-8.6300, 41.1600)" in digest
        assert "path length:" in digest

    def test_no_start_time_line_without_timestamp(self):
        traj = Trajectory(id="t", points=[GeoPoint(-8.61, 41.14),
                                          GeoPoint(-8.63, 41.16)])
        assert "start time" not in trajectory_digest(traj)


class TestSynthCsvRoundTrip:
    def test_generated_file_parses_back_identically(self, tmp_path):
        ds = generate_dataset(SyntheticSpec(seed=5, n_trajectories=20))
        path = tmp_path / "synt.csv"
        total = write_kaggle_csv(ds, path, bad_rows=7, seed=2)
        assert total == 27
        back = parse_dataset(str(path), "kaggle_porto")
        assert len(back.trajectories) == 20
        assert back.skipped_rows == 7
        assert [t.id for t in back.trajectories] == [t.id for t in ds.trajectories]
        assert [len(t.points) for t in back.trajectories] == \
               [len(t.points) for t in ds.trajectories]

    def test_iter_points_covers_every_vertex(self):
        ds = generate_dataset(SyntheticSpec(seed=5, n_trajectories=4))
        assert len(list(iter_points(ds.trajectories))) == \
               sum(len(t.points) for t in ds.trajectories)


def test_to_point_list_uses_full_precision():
    p = GeoPoint(-8.612345678901234, 41.14)
    traj = Trajectory(id="t", points=[p])
    assert f"{p.lon!r},{p.lat!r}" in to_point_list(traj)
    assert float(to_point_list(traj).split(",")[0]) == p.lon
