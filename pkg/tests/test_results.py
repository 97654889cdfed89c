import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qemitter.errors import UsageError
from qemitter.results import (ResultBundle, csv_text, format_float, parse_summary, read_csv,
                              summary_text, SummaryEntry)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(x):
    assert float(format_float(x)) == x


def test_csv_round_trip(tmp_path, rng):
    cols = [np.linspace(0, 1, 7), rng.normal(size=7)]
    p = tmp_path / "a.csv"
    p.write_text(csv_text(["t_ns", "value"], cols))
    header, data = read_csv(p, [("t_ns", "value")])
    assert header == ["t_ns", "value"]
    assert np.array_equal(data[:, 1], cols[1])


def test_csv_shape_errors():
    with pytest.raises(UsageError):
        csv_text(["a"], [[1.0], [2.0]])
    with pytest.raises(UsageError):
        csv_text(["a", "b"], [[1.0], [2.0, 3.0]])


@pytest.mark.parametrize("body, fragment", [
    ("", "empty CSV"),
    ("t_ns,value\n", "no data rows"),
    ("time,value\n1,2\n", "line 1: header"),
    ("t_ns,value\n1,2\n3\n", "line 3: 1 fields"),
    ("t_ns,value\n1,2\n3,x\n", "line 3"),
    ("t_ns,value\n1,nan\n", "line 2: non-finite"),
])
def test_read_csv_errors(tmp_path, body, fragment):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(UsageError) as info:
        read_csv(p, [("t_ns", "value")])
    assert fragment in str(info.value)


def test_read_csv_skips_comments(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("# note\nt_ns,value,sigma\n\n0,1,0.1\n# mid\n1,2,0.1\n")
    header, data = read_csv(p, [("t_ns", "value")])
    assert header == ["t_ns", "value", "sigma"] and data.shape == (2, 3)


def test_missing_file(tmp_path):
    with pytest.raises(UsageError, match="cannot read"):
        read_csv(tmp_path / "none.csv")


def test_summary_round_trip():
    entries = [SummaryEntry("a.b", 0.1 + 0.2, "fit"), SummaryEntry("n", 3),
               SummaryEntry("flag", True, "config"), SummaryEntry("xs", [1.0, 2.5]),
               SummaryEntry("note", "two\nlines")]
    text = summary_text(entries)
    parsed = parse_summary(text)
    assert float(parsed["a.b"]) == 0.1 + 0.2
    assert parsed["n"] == "3" and parsed["flag"] == "true" and parsed["xs"] == "1.0, 2.5"
    assert "# fit" in text.splitlines()[0]


class TestBundle:
    def _bundle(self):
        b = ResultBundle()
        b.table("curve", ["x", "y"], [[0.0, 1.0], [2.0, 3.0]])
        b.add("k", 1.5)
        b.extra_text["notes.txt"] = "hello\n"
        return b

    def test_write_creates_directory(self, tmp_path):
        out = tmp_path / "deep" / "run"
        files = self._bundle().write(out)
        assert sorted(os.listdir(out)) == ["curve.csv", "notes.txt", "summary.txt"]
        assert len(files) == 3
        assert not [n for n in os.listdir(out.parent) if n.startswith(".stage-")]

    def test_write_into_existing_directory(self, tmp_path):
        (tmp_path / "keep.txt").write_text("x")
        self._bundle().write(tmp_path)
        assert (tmp_path / "keep.txt").exists() and (tmp_path / "curve.csv").exists()

    def test_byte_identical_rerender(self):
        assert self._bundle().render() == self._bundle().render()

    def test_value_lookup(self):
        b = self._bundle()
        assert b.value("k") == 1.5
        with pytest.raises(KeyError):
            b.value("missing")
