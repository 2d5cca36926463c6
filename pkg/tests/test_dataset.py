import numpy as np
import pytest

from sockf.dataset import (
    Dataset,
    JitterError,
    ParseError,
    SchemaError,
    load_dataset_csv,
    write_dataset_csv,
)

MINIMAL = "t_s,current_a,voltage_v,soc_true\n0.0,1.0,3.9,0.9\n0.1,1.1,3.89,0.8999\n0.2,1.2,3.88,0.8998\n"


def make_dataset(n=20, with_truth=True, temp=None):
    rng = np.random.default_rng(0)
    meta = {"source": "test", "dt": 0.5}
    if temp is not None:
        meta["temp_c"] = temp
    return Dataset(
        t=0.5 * np.arange(n),
        current=rng.uniform(0, 3, n),
        voltage=rng.uniform(3.0, 4.2, n),
        soc_true=np.linspace(0.9, 0.5, n) if with_truth else None,
        meta=meta,
    )


class TestLoad:
    def test_minimal_valid(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(MINIMAL)
        ds = load_dataset_csv(path)
        assert len(ds) == 3
        assert ds.dt == pytest.approx(0.1)
        assert ds.has_truth

    def test_missing_soc_true_is_schema_error(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t_s,current_a,voltage_v\n0,1,3.9\n1,1,3.8\n")
        with pytest.raises(SchemaError):
            load_dataset_csv(path)

    def test_estimation_only_mode(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t_s,current_a,voltage_v\n0,1,3.9\n1,1,3.8\n")
        ds = load_dataset_csv(path, allow_missing_soc=True)
        assert not ds.has_truth

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t_s,current_a,voltage_v,soc_true\n0,1,3.9,0.9\n1,oops,3.8,0.89\n")
        with pytest.raises(ParseError) as err:
            load_dataset_csv(path)
        assert err.value.line == 3

    def test_cell_count_mismatch(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t_s,current_a,voltage_v,soc_true\n0,1,3.9\n")
        with pytest.raises(ParseError):
            load_dataset_csv(path)

    def test_jitter_error(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("t_s,current_a,voltage_v,soc_true\n0,1,3.9,0.9\n1,1,3.8,0.89\n2.5,1,3.7,0.88\n")
        with pytest.raises(JitterError):
            load_dataset_csv(path)

    def test_temp_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text(
            "t_s,current_a,voltage_v,soc_true,temp_c\n0,1,3.9,0.9,25\n1,1,3.8,0.89,25\n"
        )
        ds = load_dataset_csv(path)
        assert ds.meta["temp_c"] == 25.0


class TestRoundTrip:
    def test_write_then_load_identity(self, tmp_path):
        ds = make_dataset(37)
        path = tmp_path / "round.csv"
        write_dataset_csv(ds, path)
        back = load_dataset_csv(path)
        assert np.array_equal(back.t, ds.t)
        assert np.array_equal(back.current, ds.current)
        assert np.array_equal(back.voltage, ds.voltage)
        assert np.array_equal(back.soc_true, ds.soc_true)

    def test_temp_roundtrip(self, tmp_path):
        ds = make_dataset(5, temp=-10.0)
        path = tmp_path / "temp.csv"
        write_dataset_csv(ds, path)
        back = load_dataset_csv(path)
        assert back.meta["temp_c"] == -10.0

    def test_no_leftover_tempfile(self, tmp_path):
        write_dataset_csv(make_dataset(5), tmp_path / "x.csv")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["x.csv"]


class TestInvariants:
    def test_minimum_length(self):
        with pytest.raises(ValueError):
            Dataset(
                t=np.array([0.0]),
                current=np.array([1.0]),
                voltage=np.array([3.9]),
                soc_true=np.array([0.5]),
            )

    def test_soc_range(self):
        with pytest.raises(ValueError):
            Dataset(
                t=np.array([0.0, 1.0]),
                current=np.zeros(2),
                voltage=np.zeros(2),
                soc_true=np.array([0.5, 1.4]),
            )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(
                t=np.array([0.0, 1.0]),
                current=np.zeros(3),
                voltage=np.zeros(2),
                soc_true=None,
            )
