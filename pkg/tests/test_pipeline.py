import json

import pytest

from trajstory.errors import (ConfigurationError, InfrastructureError,
                              ParseError, StoryValidationError)
from trajstory.pipeline import (AgentPlan, StoryRequest, execute, plan,
                                write_bundle)
from trajstory.story import NarrativeSpec, TemplateBackend
from trajstory.synth import ScriptedBackend
from trajstory.validation import GroundingPolicy

GOOD_STORY = "The day ends at [[POI: Avenida dos Aliados]].\n"
UNPARSEABLE = "a story with no markup at all\n"
UNKNOWN_POI = "All roads lead to [[POI: Atlantis Pier]].\n"

FB_MARKUP = "Fix markup: story contains no POI markup spans."
FB_UNKNOWN = "Do not mention Atlantis Pier: it could not be located."


def heatmap_request(csv_path, **kw):
    kw.setdefault("spec", NarrativeSpec())
    return StoryRequest(dataset_path=str(csv_path), mode="heatmap", **kw)


def lenient_heatmap_request(csv_path, **kw):
    return heatmap_request(csv_path,
                           spec=NarrativeSpec(min_pois=1, max_words=10_000), **kw)


@pytest.fixture()
def route_file(tmp_path, central_route):
    path = tmp_path / "downtown.txt"
    path.write_text("".join(f"{p.lon!r},{p.lat!r}\n" for p in central_route))
    return path


class TestPlan:
    def test_heatmap_steps(self, cluster_csv):
        p = plan(heatmap_request(cluster_csv))
        assert p.names() == ["ingest", "analytics", "discovery",
                             "generate", "validate", "emit"]
        by_name = {s.name: s.params for s in p.steps}
        assert by_name["analytics"]["op"] == "grid_hotspots"
        assert by_name["discovery"]["centers"] == "hotspots"
        assert by_name["validate"]["threshold_m"] == 1000.0

    def test_single_trajectory_steps(self, cluster_csv):
        req = StoryRequest(dataset_path=str(cluster_csv), mode="single_trajectory",
                           spec=NarrativeSpec(mode="single_trajectory"))
        p = plan(req)
        assert p.names() == ["ingest", "analytics", "discovery",
                             "generate", "validate", "emit"]
        by_name = {s.name: s.params for s in p.steps}
        assert by_name["analytics"]["op"] == "select_trajectory"
        assert by_name["analytics"]["criterion"] == "longest_by_points"
        assert by_name["discovery"]["centers"] == "trajectory_samples"
        assert by_name["validate"]["threshold_m"] == 500.0

    def test_same_request_same_plan(self, cluster_csv):
        req = heatmap_request(cluster_csv)
        assert plan(req) == plan(req)
        assert isinstance(plan(req), AgentPlan)

    def test_all_violations_reported_at_once(self, cluster_csv):
        req = heatmap_request(cluster_csv, max_retries=0,
                              discovery_radius_m=-5.0, cell_size_m=0.0)
        with pytest.raises(ConfigurationError) as err:
            plan(req)
        msg = str(err.value)
        assert msg.startswith("invalid request: ")
        assert "max_retries" in msg
        assert "discovery_radius_m" in msg
        assert "cell_size_m" in msg

    def test_mode_mismatch_with_spec(self, cluster_csv):
        req = StoryRequest(dataset_path=str(cluster_csv), mode="single_trajectory",
                           spec=NarrativeSpec(mode="heatmap"))
        with pytest.raises(ConfigurationError, match="narrative spec mode"):
            plan(req)

    def test_by_id_needs_an_id(self, cluster_csv):
        req = StoryRequest(dataset_path=str(cluster_csv), mode="single_trajectory",
                           spec=NarrativeSpec(mode="single_trajectory"),
                           selection="by_id")
        with pytest.raises(ConfigurationError, match="selection_id"):
            plan(req)


class TestExecuteHeatmap:
    def test_first_attempt_passes_offline(self, cluster_csv):
        result = execute(heatmap_request(cluster_csv), TemplateBackend())
        assert result.attempts == 1
        assert result.report.overall
        assert result.story.word_count <= 150
        assert len({m.name for m in result.story.mentions}) >= 15
        assert [t.step for t in result.trace] == \
            ["ingest", "analytics", "discovery", "generate", "validate", "emit"]
        assert all(t.seconds >= 0.0 for t in result.trace)

    def test_map_reflects_the_grounded_story(self, cluster_csv):
        result = execute(heatmap_request(cluster_csv), TemplateBackend())
        mentioned = {m.name for m in result.story.mentions}
        assert len(result.map.legend) == len(mentioned)
        assert {name for _, name in result.map.legend} == mentioned
        assert result.map.paths == []
        for marker in result.map.markers:
            assert result.map.bbox.contains(marker.center)

    def test_replay_is_deterministic(self, cluster_csv):
        from trajstory.mapdoc import render_geojson
        a = execute(heatmap_request(cluster_csv), TemplateBackend())
        b = execute(heatmap_request(cluster_csv), TemplateBackend())
        assert a.story.text == b.story.text
        assert a.report == b.report
        assert render_geojson(a.map) == render_geojson(b.map)
        assert a.attempts == b.attempts


class TestExecuteSingleTrajectory:
    def request(self, route_file):
        return StoryRequest(
            dataset_path=str(route_file), mode="single_trajectory",
            dataset_schema="point_list",
            spec=NarrativeSpec(mode="single_trajectory", min_pois=5,
                               max_words=200),
            discovery_radius_m=300.0)

    def test_route_story_grounds_on_the_path(self, route_file, central_route):
        result = execute(self.request(route_file), TemplateBackend())
        assert result.attempts == 1
        assert result.report.overall
        assert result.map.paths == [central_route]
        for verdict in result.report.per_poi:
            assert verdict.distance_m <= 300.0


class TestRetryLoop:
    def test_feedback_accumulates_across_attempts(self, cluster_csv):
        backend = ScriptedBackend([UNPARSEABLE, UNKNOWN_POI, GOOD_STORY])
        result = execute(lenient_heatmap_request(cluster_csv), backend)

        assert result.attempts == 3
        assert backend.call_count == 3
        assert [t.step for t in result.trace] == \
            ["ingest", "analytics", "discovery",
             "generate", "feedback",
             "generate", "validate", "feedback",
             "generate", "validate", "emit"]
        feedback = [t.detail for t in result.trace if t.step == "feedback"]
        assert feedback == [FB_MARKUP, FB_UNKNOWN]

        assert "Additional instructions" not in backend.prompts[0]
        assert FB_MARKUP in backend.prompts[1]
        assert FB_UNKNOWN not in backend.prompts[1]
        p3 = backend.prompts[2]
        assert FB_MARKUP in p3 and FB_UNKNOWN in p3
        assert p3.index(FB_MARKUP) < p3.index(FB_UNKNOWN)

    def test_unparseable_attempt_is_traced(self, cluster_csv):
        backend = ScriptedBackend([UNPARSEABLE, GOOD_STORY])
        result = execute(lenient_heatmap_request(cluster_csv), backend)
        gen1 = [t for t in result.trace if t.step == "generate"][0]
        assert "attempt 1: unparseable story" in gen1.detail

    def test_request_spec_is_not_mutated(self, cluster_csv):
        req = lenient_heatmap_request(cluster_csv)
        backend = ScriptedBackend([UNKNOWN_POI, GOOD_STORY])
        execute(req, backend)
        assert req.spec.extra_instructions == []

    def test_exhaustion_raises_with_the_final_report(self, cluster_csv):
        backend = ScriptedBackend([UNKNOWN_POI, UNKNOWN_POI, GOOD_STORY])
        req = lenient_heatmap_request(cluster_csv, max_retries=2)
        with pytest.raises(StoryValidationError) as err:
            execute(req, backend)
        assert backend.call_count == 2          # the third response stays unused
        assert "2 attempt(s)" in str(err.value)
        assert err.value.report is not None
        assert not err.value.report.overall
        assert err.value.story.text == UNKNOWN_POI
        feedback = [t for t in err.value.trace if t.step == "feedback"]
        assert len(feedback) == 1               # none after the final attempt

    def test_backend_outage_is_tagged_infrastructure(self, cluster_csv):
        class DownBackend:
            backend_id = "down"

            def generate(self, prompt, ctx, spec):
                raise InfrastructureError("backend down")

        with pytest.raises(InfrastructureError) as err:
            execute(lenient_heatmap_request(cluster_csv), DownBackend())
        assert err.value.step == "generate"


class TestIngestFailures:
    def test_missing_file(self, tmp_path):
        req = heatmap_request(tmp_path / "nope.csv")
        with pytest.raises(ConfigurationError, match="cannot read dataset"):
            execute(req, TemplateBackend())

    def test_header_only_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("TRIP_ID,CALL_TYPE,ORIGIN_CALL,ORIGIN_STAND,TAXI_ID,"
                        "TIMESTAMP,DAY_TYPE,MISSING_DATA,POLYLINE\n")
        with pytest.raises(ParseError, match="no usable trajectories"):
            execute(heatmap_request(path), TemplateBackend())


class TestWriteBundle:
    def test_full_bundle(self, cluster_csv, tmp_path):
        result = execute(heatmap_request(cluster_csv), TemplateBackend())
        out = tmp_path / "bundle"
        written = write_bundle(result, out)
        assert [p.name for p in written] == \
            ["story.txt", "story.json", "report.json", "report.txt",
             "map.geojson", "map.html", "trace.json"]
        assert (out / "story.txt").read_text(encoding="utf-8") == result.story.text
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["overall"] == "pass"
        geo = json.loads((out / "map.geojson").read_text(encoding="utf-8"))
        assert geo["type"] == "FeatureCollection"
        trace = json.loads((out / "trace.json").read_text(encoding="utf-8"))
        assert trace["attempts"] == 1
        assert trace["steps"][0]["step"] == "ingest"

    def test_html_is_optional(self, cluster_csv, tmp_path):
        result = execute(heatmap_request(cluster_csv), TemplateBackend())
        written = write_bundle(result, tmp_path / "nohtml", with_html=False)
        assert all(p.name != "map.html" for p in written)
        assert not (tmp_path / "nohtml" / "map.html").exists()
