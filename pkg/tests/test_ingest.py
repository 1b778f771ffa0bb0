"""NDJSON ingestion: parsing, validation errors, and round trips."""

import io
import json
import math

import numpy as np
import pytest

from fedtraj import IngestError, Trajectory, dump_ndjson, iter_ndjson, load_ndjson
from fedtraj.ingest import project_equirectangular


def _write(tmp_path, lines):
    p = tmp_path / "db.ndjson"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


class TestParsing:
    def test_round_trip(self, tmp_path, corpus_200):
        p = tmp_path / "db.ndjson"
        dump_ndjson(corpus_200, p)
        back = load_ndjson(p)
        assert [t.id for t in back] == [t.id for t in corpus_200]
        for a, b in zip(back, corpus_200):
            np.testing.assert_array_equal(a.points, b.points)

    def test_dump_accepts_file_object(self, corpus_200):
        buf = io.StringIO()
        dump_ndjson(corpus_200[:3], buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 3
        assert json.loads(lines[0])["id"] == corpus_200[0].id

    def test_blank_lines_skipped(self, tmp_path):
        p = _write(
            tmp_path,
            ['{"id": "a", "points": [[0, 1, 2], [5, 3, 4]]}', "", "   "],
        )
        assert [t.id for t in load_ndjson(p)] == ["a"]

    def test_streaming_is_lazy(self, tmp_path):
        # Second line is garbage; the first record must still come out.
        p = _write(tmp_path, ['{"id": "a", "points": [[0, 1, 2]]}', "{nope"])
        it = iter_ndjson(p)
        assert next(it).id == "a"
        with pytest.raises(IngestError, match="line 2"):
            next(it)


class TestRejection:
    """Every malformed record is refused with its line number."""

    @pytest.mark.parametrize(
        "line, pattern",
        [
            ("[1, 2, 3]", "not a JSON object"),
            ('{"points": [[0, 1, 2]]}', "non-string 'id'"),
            ('{"id": "", "points": [[0, 1, 2]]}', "non-string 'id'"),
            ('{"id": "a", "points": []}', "non-empty list"),
            ('{"id": "a", "points": [[0, 1]]}', "not \\[ts, x, y\\]"),
            ('{"id": "a", "points": [[0, 1, "x"]]}', "non-numeric"),
            ('{"id": "a", "points": [[5, 1, 2], [0, 3, 4]]}', "line 1"),
            ('{"id": "a", "points": [[0, 1, null]]}', "non-numeric"),
        ],
    )
    def test_bad_record(self, tmp_path, line, pattern):
        with pytest.raises(IngestError, match=pattern):
            load_ndjson(_write(tmp_path, [line]))

    def test_line_number_points_at_offender(self, tmp_path):
        good = '{"id": "a", "points": [[0, 1, 2]]}'
        bad = '{"id": "b", "points": [[0, 1]]}'
        with pytest.raises(IngestError, match="line 3"):
            load_ndjson(_write(tmp_path, [good, good, bad]))

    def test_invalid_json(self, tmp_path):
        with pytest.raises(IngestError, match="invalid JSON"):
            load_ndjson(_write(tmp_path, ["{truncated"]))


class TestProjection:
    def test_reference_latitude_origin(self):
        assert project_equirectangular(0.0, 0.0, 0.0) == (0.0, 0.0)

    def test_one_degree_north(self):
        _, y = project_equirectangular(0.0, 1.0, 0.0)
        assert y == pytest.approx(6_371_000.0 * math.pi / 180.0)

    def test_longitude_shrinks_with_latitude(self):
        x_eq, _ = project_equirectangular(1.0, 60.0, 0.0)
        x_60, _ = project_equirectangular(1.0, 60.0, 60.0)
        assert x_60 == pytest.approx(x_eq * math.cos(math.radians(60.0)))

    def test_geographic_load(self, tmp_path):
        rec = {"id": "g", "points": [[0.0, 13.40, 52.52], [60.0, 13.41, 52.52]]}
        p = _write(tmp_path, [json.dumps(rec)])
        (t,) = load_ndjson(p, geographic=True, ref_lat=52.52)
        x0, y0 = project_equirectangular(13.40, 52.52, 52.52)
        assert t.points[0][1] == pytest.approx(x0)
        assert t.points[0][2] == pytest.approx(y0)
        # 0.01 degrees of longitude at Berlin's latitude is roughly 680 m.
        assert 500 < t.points[1][1] - t.points[0][1] < 800


def test_dump_is_valid_input_for_load(tmp_path):
    t = Trajectory(id="x", points=np.array([[0.0, 1.25, -3.5], [10.0, 2.0, 4.0]]))
    p = tmp_path / "one.ndjson"
    dump_ndjson([t], p)
    (back,) = load_ndjson(p)
    np.testing.assert_array_equal(back.points, t.points)
