import filecmp

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbinefault.dataio import (
    CHRONOLOGICAL,
    DEFAULT_SCHEMA,
    FEATURE_NAMES,
    TEST,
    TRAIN,
    VAL,
    MetNormalizer,
    MetRecord,
    build_labeled_dataset,
    denormalize,
    ingest_csv,
    normalize,
    read_dataset_csv,
    records_to_arrays,
    split_counts,
    split_dataset,
    surrogate_records,
    synth_dataset,
    write_dataset_csv,
    write_records_csv,
)
from turbinefault.exceptions import (
    BadFractions,
    DegenerateColumn,
    EmptyFile,
    InsufficientData,
    MissingColumn,
    ParseError,
)
from turbinefault.powercurve import TurbineSpec, ideal_power, is_fault

HEADER = ",".join(DEFAULT_SCHEMA[k] for k in DEFAULT_SCHEMA)


def _row(month=1, day=1, hour=0, minute=0, ws=7.5, temp=280.0, pres=90000.0, wd=10.0,
         dens=1.1, power=1.5):
    return f"{month},{day},{hour},{minute},{ws},{temp},{pres},{wd},{dens},{power}"


@pytest.fixture
def csv_file(tmp_path):
    path = tmp_path / "met.csv"
    rows = [_row(minute=0), _row(minute=10, ws=2.0, power=0.0), _row(minute=20, ws=30.0, wd=370.0)]
    path.write_text(HEADER + "\n" + "\n".join(rows) + "\n")
    return path


class TestIngest:
    def test_well_formed(self, csv_file):
        recs = ingest_csv(csv_file)
        assert len(recs) == 3
        assert [r.minute for r in recs] == [0, 10, 20]
        assert recs[1].wind_speed == 2.0
        assert recs[2].wind_direction == pytest.approx(10.0)

    def test_idempotent(self, csv_file):
        assert ingest_csv(csv_file) == ingest_csv(csv_file)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        header = HEADER.replace(DEFAULT_SCHEMA["wind_speed"], "gust")
        path.write_text(header + "\n" + _row() + "\n")
        with pytest.raises(MissingColumn, match="wind_speed"):
            ingest_csv(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(EmptyFile):
            ingest_csv(path)
        path.write_text(HEADER + "\n")
        with pytest.raises(EmptyFile):
            ingest_csv(path)

    @pytest.mark.parametrize("bad", [_row(ws="nan"), _row(ws="abc"), _row(month=13),
                                     _row(temp=-1), _row(ws=-2), "1,2,3"])
    def test_strict_and_lenient(self, tmp_path, bad):
        path = tmp_path / "mixed.csv"
        path.write_text("\n".join([HEADER, _row(), bad, _row(minute=20)]) + "\n")
        with pytest.raises(ParseError) as err:
            ingest_csv(path)
        assert err.value.row == 3
        recs, skipped = ingest_csv(path, strict=False, return_skipped=True)
        assert len(recs) == 2 and skipped == 1

    def test_custom_schema_and_metadata_lines(self, tmp_path):
        schema = {k: f"col_{k}" for k in DEFAULT_SCHEMA}
        path = tmp_path / "custom.csv"
        path.write_text("SiteID,42\nsome,metadata\n" + ",".join(schema.values()) + "\n"
                        + _row() + "\n")
        recs = ingest_csv(path, schema, skip_rows=2)
        assert recs[0].power == 1.5

    def test_write_read_round_trip(self, tmp_path, spec):
        recs = synth_dataset(spec, 50, 0.05, 0.2, seed=3)
        path = tmp_path / "rt.csv"
        write_records_csv(recs, path)
        assert ingest_csv(path) == recs


class TestNormalize:
    def test_z_scores_on_train_split(self, spec):
        recs = synth_dataset(spec, 1000, 0.05, 0.1, seed=1)
        mask = split_dataset(1000, (0.7, 0.15, 0.15), 42) == TRAIN
        feats, target, stats = normalize(recs, mask)
        assert np.allclose(feats[mask].mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(feats[mask].std(axis=0), 1.0, atol=1e-9)
        assert target[mask].min() == 0.0 and target[mask].max() == 1.0

    def test_min_max_example(self):
        norm = MetNormalizer().fit(np.random.default_rng(0).normal(size=(3, 9)), [0.0, 2.0, 4.0])
        assert list(norm.transform_target([0.0, 2.0, 4.0])) == [0.0, 0.5, 1.0]

    def test_round_trip(self, spec):
        recs = synth_dataset(spec, 1000, 0.05, 0.1, seed=2)
        X, y = records_to_arrays(recs)
        feats, target, stats = normalize(recs, np.ones(1000, dtype=bool))
        X2, y2 = denormalize(feats, target, stats)
        assert np.max(np.abs(X2 - X)) <= 1e-9 * max(1.0, np.abs(X).max())
        assert np.max(np.abs(y2 - y)) <= 1e-9

    def test_degenerate(self, spec):
        recs = [MetRecord(**{**r.__dict__, "month": 6})
                for r in synth_dataset(spec, 5, 0.05, 0.1, seed=2)]
        with pytest.raises(DegenerateColumn, match="month"):
            normalize(recs, np.ones(5, dtype=bool))
        with pytest.raises(InsufficientData):
            normalize(recs, np.array([True, False, False, False, False]))

    def test_sklearn_api(self):
        from sklearn.base import clone
        norm = MetNormalizer()
        assert clone(norm).get_params() == {}
        X = np.random.default_rng(1).normal(size=(20, 9))
        y = np.linspace(0, 3, 20)
        Z = norm.fit(X, y).transform(X)
        assert np.allclose(norm.inverse_transform(Z), X)


class TestSplit:
    def test_seventy_fifteen_fifteen(self):
        tags = split_dataset(100, (0.7, 0.15, 0.15), seed=42)
        assert [(tags == t).sum() for t in (TRAIN, VAL, TEST)] == [70, 15, 15]

    def test_two_way(self):
        tags = split_dataset(10, (0.7, 0.3, 0.0), seed=1)
        assert [(tags == t).sum() for t in (TRAIN, VAL, TEST)] == [7, 3, 0]

    def test_deterministic(self):
        assert np.array_equal(split_dataset(500, seed=9), split_dataset(500, seed=9))
        assert not np.array_equal(split_dataset(500, seed=9), split_dataset(500, seed=10))

    def test_chronological_is_contiguous(self):
        tags = split_dataset(20, (0.5, 0.25, 0.25), mode=CHRONOLOGICAL)
        assert list(tags) == [TRAIN] * 10 + [VAL] * 5 + [TEST] * 5

    @pytest.mark.parametrize("fr", [(0.5, 0.5, 0.5), (0.0, 0.5, 0.5), (-0.1, 0.6, 0.5), (1.0,)])
    def test_bad_fractions(self, fr):
        with pytest.raises(BadFractions):
            split_dataset(10, fr)

    @given(st.integers(1, 1000), st.integers(0, 2**32 - 1))
    @settings(max_examples=200)
    def test_partition_and_rounding(self, n, seed):
        tags = split_dataset(n, (0.7, 0.15, 0.15), seed=seed)
        counts = [(tags == t).sum() for t in (TRAIN, VAL, TEST)]
        assert sum(counts) == n == len(tags)
        expected_val = min(int(np.floor(n * 0.15 + 0.5)), n)
        expected_test = min(int(np.floor(n * 0.15 + 0.5)), n - expected_val)
        assert counts == [n - expected_val - expected_test, expected_val, expected_test]
        assert tuple(counts) == split_counts(n, (0.7, 0.15, 0.15))


class TestSynth:
    def test_noiseless_region2_on_curve(self, spec):
        recs = synth_dataset(spec, 2000, noise_sigma=0.0, fault_fraction=0.0, seed=4)
        v = np.array([r.wind_speed for r in recs])
        p = np.array([r.power for r in recs])
        assert np.all((v >= spec.cut_in) & (v <= spec.cut_out))
        assert np.array_equal(p, ideal_power(v, spec))

    def test_fault_share(self, spec):
        # binomial sd at n=10,000, p=0.1 is 0.003; 0.02 is a loose band
        recs = synth_dataset(spec, 10_000, 0.05, fault_fraction=0.1, seed=11)
        share = is_fault(np.array([r.wind_speed for r in recs]), spec).mean()
        assert abs(share - 0.10) <= 0.02

    def test_deterministic_bytes(self, spec, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_records_csv(synth_dataset(spec, 300, 0.05, 0.1, seed=5, autocorrelation=0.9), a)
        write_records_csv(synth_dataset(spec, 300, 0.05, 0.1, seed=5, autocorrelation=0.9), b)
        assert filecmp.cmp(a, b, shallow=False)

    def test_plausible_ranges(self, spec):
        recs = synth_dataset(spec, 500, 0.05, 0.1, seed=6)
        X, p = records_to_arrays(recs)
        cols = dict(zip(FEATURE_NAMES, X.T))
        assert np.all(p >= 0)
        assert np.all((cols["density"] > 0.9) & (cols["density"] < 1.4))
        assert np.all((cols["wind_direction"] >= 0) & (cols["wind_direction"] < 360))
        assert set(cols["month"]) == set(range(1, 13))

    def test_surrogate_size(self):
        recs = surrogate_records()
        assert len(recs) == 29_736
        assert (recs[1].minute - recs[0].minute) % 60 == 10


class TestLabeledDataset:
    def test_labels_follow_region_rule(self, small_dataset):
        ds = small_dataset
        spec = TurbineSpec(rated_power=3.0)
        assert np.array_equal(ds.fault_label, is_fault(ds.wind_speed(), spec))
        assert len({len(ds.features), len(ds.power_target), len(ds.fault_label),
                    len(ds.split_tag)}) == 1

    def test_boundary_speed_survives_normalisation(self, spec):
        recs = synth_dataset(spec, 200, 0.0, 0.2, seed=8)
        recs[0] = MetRecord(**{**recs[0].__dict__, "wind_speed": spec.cut_in})
        ds = build_labeled_dataset(recs, spec)
        assert ds.fault_label[0] == 0
        assert np.array_equal(ds.fault_label, is_fault(ds.wind_speed(), spec))

    def test_immutable(self, small_dataset):
        with pytest.raises(ValueError):
            small_dataset.features[0, 0] = 1.0

    def test_canonical_file_round_trip(self, small_dataset, tmp_path):
        path = tmp_path / "dataset.csv"
        write_dataset_csv(small_dataset, path)
        back = read_dataset_csv(path, small_dataset.stats)
        assert np.array_equal(back.features, small_dataset.features)
        assert np.array_equal(back.power_target, small_dataset.power_target)
        assert np.array_equal(back.fault_label, small_dataset.fault_label)
        assert np.array_equal(back.split_tag, small_dataset.split_tag)
        header = path.read_text().splitlines()[0].split(",")
        assert header == list(FEATURE_NAMES) + ["power_target", "fault_label", "split_tag"]
