import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorgp.basis import PolynomialBasis
from priorgp.dataset import (
    GeneratorSpec,
    Trajectory,
    format_trajectories,
    load,
    parse_trajectories,
    read_trajectories,
    synthesize,
    write_trajectories,
)
from priorgp.errors import InvalidSpecError, ParseError, SchemaError

CSV = "trajectory_id,x,y\n1,0.0,1.0\n1,1.0,2.0\n2,0.5,3.0\n"


def write_manifest(tmp_path, csv_text=CSV, **extra):
    (tmp_path / "t.csv").write_text(csv_text, encoding="utf-8")
    manifest = {"name": "demo", "files": ["t.csv"], **extra}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return path


class TestTrajectory:
    def test_immutable(self):
        t = Trajectory("a", [0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            t.xs[0] = 5.0

    @pytest.mark.parametrize("xs,ys", [([1.0, 1.0], [0.0, 0.0]), ([], []), ([0.0], [1.0, 2.0]), ([0.0, np.inf], [1.0, 1.0])])
    def test_invalid(self, xs, ys):
        with pytest.raises(SchemaError):
            Trajectory("a", xs, ys)

    def test_prefix(self):
        xs, ys = Trajectory("a", [0.0, 1.0, 2.0], [3.0, 4.0, 5.0]).prefix(2)
        np.testing.assert_array_equal(xs, [0.0, 1.0])
        np.testing.assert_array_equal(ys, [3.0, 4.0])


class TestCsv:
    def test_parse(self):
        trajs = parse_trajectories(CSV)
        assert [t.id for t in trajs] == ["1", "2"]
        np.testing.assert_array_equal(trajs[0].ys, [1.0, 2.0])

    def test_column_order_free(self):
        trajs = parse_trajectories("x,y,trajectory_id\n0,1,a\n1,2,a\n")
        np.testing.assert_array_equal(trajs[0].xs, [0.0, 1.0])

    def test_missing_column(self):
        with pytest.raises(SchemaError, match="missing column"):
            parse_trajectories("id,x,y\n1,0,0\n")

    def test_empty(self):
        with pytest.raises(SchemaError):
            parse_trajectories("")
        with pytest.raises(SchemaError):
            parse_trajectories("trajectory_id,x,y\n")

    def test_malformed_row_number(self):
        with pytest.raises(ParseError) as info:
            parse_trajectories("trajectory_id,x,y\n1,0,0\n1,abc,1\n")
        assert info.value.row == 3

    def test_non_monotone_row_number(self):
        with pytest.raises(ParseError) as info:
            parse_trajectories("trajectory_id,x,y\n1,0,0\n1,2,1\n1,1,1\n")
        assert info.value.row == 4

    def test_non_finite_rejected(self):
        with pytest.raises(ParseError) as info:
            parse_trajectories("trajectory_id,x,y\n1,0,nan\n")
        assert info.value.row == 2

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.lists(st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False), min_size=1, max_size=6),
            min_size=1,
            max_size=4,
        )
    )
    def test_roundtrip_exact(self, columns):
        trajs = [Trajectory(f"t{j}", np.arange(len(ys)) * 0.1 + 1e-3, ys) for j, ys in enumerate(columns)]
        assert parse_trajectories(format_trajectories(trajs)) == trajs

    def test_file_roundtrip(self, tmp_path):
        trajs = parse_trajectories(CSV)
        write_trajectories(tmp_path / "a.csv", trajs)
        assert read_trajectories(tmp_path / "a.csv") == trajs


class TestManifest:
    def test_load_plain(self, tmp_path):
        ds = load(write_manifest(tmp_path))
        assert len(ds) == 2 and ds.inference_set() == list(ds.trajectories)

    def test_normalization_then_flip(self, tmp_path):
        csv_text = "trajectory_id,x,y\n1,0.0,10.0\n1,100.0,20.0\n"
        ds = load(write_manifest(tmp_path, csv_text, flip_axes=True, normalization={"x_divide": 100.0, "y_divide": 10.0}))
        t = ds.trajectories[0]
        np.testing.assert_array_equal(t.xs, [1.0, 2.0])
        np.testing.assert_array_equal(t.ys, [0.0, 1.0])

    def test_flip_requires_monotone_y(self, tmp_path):
        csv_text = "trajectory_id,x,y\n1,0.0,2.0\n1,1.0,1.0\n"
        with pytest.raises(ParseError):
            load(write_manifest(tmp_path, csv_text, flip_axes=True))

    def test_split(self, tmp_path):
        ds = load(write_manifest(tmp_path, split={"inference": ["1"]}))
        assert [t.id for t in ds.inference_set()] == ["1"]
        assert [t.id for t in ds.evaluation_set()] == ["2"]

    def test_split_unknown_id(self, tmp_path):
        with pytest.raises(SchemaError, match="unknown trajectory"):
            load(write_manifest(tmp_path, split={"inference": ["9"]}))

    def test_duplicate_ids_across_files(self, tmp_path):
        (tmp_path / "t.csv").write_text(CSV, encoding="utf-8")
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"files": ["t.csv", "t.csv"]}), encoding="utf-8")
        with pytest.raises(SchemaError, match="duplicate"):
            load(path)

    def test_echo_records_transformations(self, tmp_path):
        echo = load(write_manifest(tmp_path, normalization={"x_divide": 2.0})).echo()
        assert echo["applied"]["x_divide"] == 2.0 and echo["applied"]["n_trajectories"] == 2

    def test_bad_json(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{", encoding="utf-8")
        with pytest.raises(SchemaError):
            load(p)

    def test_shipped_dataset_loads(self):
        from pathlib import Path

        ds = load(Path(__file__).resolve().parents[1] / "data" / "synthetic" / "manifest.json")
        assert len(ds) == 12 and ds.manifest.paris is not None


class TestSynthesize:
    def spec(self, **kw):
        base = dict(basis=PolynomialBasis(1), mean=np.array([1.0, 2.0]), cov=np.diag([0.5, 0.2]), grid=np.linspace(0, 1, 4), count=3, noise=0.1, seed=4)
        return GeneratorSpec(**{**base, **kw})

    def test_deterministic(self):
        assert synthesize(self.spec()) == synthesize(self.spec())
        assert synthesize(self.spec()) != synthesize(self.spec(seed=5))

    def test_noise_free_lies_in_span(self):
        trajs = synthesize(self.spec(noise=0.0, count=5))
        for t in trajs:
            beta, res, *_ = np.linalg.lstsq(PolynomialBasis(1).design(t.xs), t.ys, rcond=None)
            assert res.size == 0 or res[0] < 1e-20

    def test_moments(self):
        trajs = synthesize(self.spec(noise=0.0, count=4000, grid=np.array([0.0, 1.0])))
        ys = np.array([t.ys for t in trajs])
        np.testing.assert_allclose(ys.mean(axis=0), [1.0, 3.0], atol=0.05)
        np.testing.assert_allclose(np.cov(ys.T), [[0.5, 0.5], [0.5, 0.7]], atol=0.05)

    @pytest.mark.parametrize("kw", [dict(cov=np.array([[1.0, 2.0], [2.0, 1.0]])), dict(cov=np.array([[1.0, 0.1], [0.0, 1.0]])), dict(mean=np.zeros(3)), dict(noise=-1.0), dict(count=0)])
    def test_invalid_spec(self, kw):
        with pytest.raises(InvalidSpecError):
            synthesize(self.spec(**kw))
