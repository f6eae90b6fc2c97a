import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rctsynth.demo import make_demo_table, trial_schema
from rctsynth.table import (
    ColumnSchema,
    TableError,
    complete_cases,
    dichotomize_treatment,
    inverse_standardize,
    is_monotone,
    load_csv,
    make_table,
    observed_subset,
    standardize,
    tables_equal,
    write_csv,
)


def small_schema():
    return (
        ColumnSchema("x", "continuous", "baseline"),
        ColumnSchema("arm", "categorical", "treatment", levels=("0", "1")),
        ColumnSchema("z1", "count", "post_randomization", index=1),
        ColumnSchema("z2", "count", "post_randomization", index=2),
        ColumnSchema("y", "binary", "outcome"),
    )


def small_table(mask=None):
    cols = {
        "x": [0.5, -1.0, 2.25],
        "arm": [0, 1, 0],
        "z1": [10.0, 20.0, 30.0],
        "z2": [1.0, 2.0, 3.0],
        "y": [0, 1, 1],
    }
    return make_table(small_schema(), cols, mask)


def test_demo_table_fully_observed():
    t = make_demo_table()
    assert t.n_rows == 1342
    assert t.all_observed()


def test_load_csv_round_trips_demo(tmp_path):
    t = make_demo_table(n=60)
    path = tmp_path / "demo.csv"
    write_csv(t, path)
    back = load_csv(path, trial_schema())
    assert tables_equal(t, back)


def test_load_csv_empty_file_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("x,arm,z1,z2,y\n")
    t = load_csv(path, small_schema())
    assert t.n_rows == 0


def test_load_csv_missing_token_masks_single_cell(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("x,arm,z1,z2,y\n1.0,0,5.0,NA,1\n2.0,1,6.0,7.0,0\n")
    t = load_csv(path, small_schema())
    assert not t.mask["z2"][0]
    assert t.mask["z2"][1]
    for name in ("x", "arm", "z1", "y"):
        assert t.mask[name].all()


def test_load_csv_parse_error_reports_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,arm,z1,z2,y\n1.0,0,oops,2.0,1\n")
    with pytest.raises(TableError, match="row 0.*z1"):
        load_csv(path, small_schema())


def test_load_csv_missing_baseline_is_hard_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,arm,z1,z2,y\n1.0,0,1.0,2.0,1\nNA,1,1.0,2.0,0\n")
    with pytest.raises(TableError, match="row 1"):
        load_csv(path, small_schema())


def test_complete_cases_identity_when_fully_observed():
    t = small_table()
    assert tables_equal(complete_cases(t), t)


def test_complete_cases_drops_any_masked_row():
    t = small_table(mask={"z1": [True, False, True]})
    cc = complete_cases(t)
    assert list(cc.row_ids) == [0, 2]
    assert cc.n_rows == 2


def test_observed_subset_empty_requirement_is_full_table():
    t = small_table(mask={"z1": [True, False, True]})
    assert observed_subset(t, []).n_rows == 3


def test_observed_subset_intersection_oracle():
    t = small_table(mask={"z1": [True, False, True], "y": [False, True, True]})
    got = observed_subset(t, ["z1", "y"])
    want = [i for i in range(3) if t.mask["z1"][i] and t.mask["y"][i]]
    assert list(got.row_ids) == want


def test_observed_subset_unknown_column():
    with pytest.raises(TableError):
        observed_subset(small_table(), ["nope"])


def test_complete_cases_never_larger_than_observed_subset():
    rng = np.random.default_rng(3)
    t = small_table(mask={"z1": rng.random(3) < 0.5, "z2": rng.random(3) < 0.5})
    for req in ([], ["z1"], ["z2"], ["z1", "z2"]):
        assert complete_cases(t).n_rows <= observed_subset(t, req).n_rows


def test_standardize_hand_case():
    t = small_table()
    out, params = standardize(t, ["z1"])
    assert np.allclose(out.columns["z1"], [-1.0, 0.0, 1.0])
    assert params.moments["z1"] == (20.0, 10.0)


def test_standardize_idempotent_on_standardized_column():
    t = small_table()
    once, _ = standardize(t, ["x"])
    twice, _ = standardize(once, ["x"])
    assert np.allclose(once.columns["x"], twice.columns["x"], atol=1e-12)


def test_standardize_ignores_masked_cells():
    t = small_table(mask={"z1": [True, False, True]})
    out, params = standardize(t, ["z1"])
    mu, sd = params.moments["z1"]
    obs = np.array([10.0, 30.0])
    assert mu == obs.mean()
    assert sd == obs.std(ddof=1)
    assert np.isnan(out.columns["z1"][1])


def test_standardize_zero_variance_errors():
    t = small_table(mask={"z1": [True, False, False]})
    with pytest.raises(TableError):
        standardize(t, ["z1"])
    flat = small_table()
    flat = flat.replace_column("x", np.array([1.0, 1.0, 1.0]))
    with pytest.raises(TableError, match="zero variance"):
        standardize(flat, ["x"])


def test_standardize_inverse_round_trip():
    t = make_demo_table(n=200)
    out, params = standardize(t, ["cd4_baseline", "age"])
    back = inverse_standardize(out, params)
    for name in ("cd4_baseline", "age"):
        orig = t.columns[name]
        rel = np.abs(back.columns[name] - orig) / np.maximum(np.abs(orig), 1.0)
        assert rel.max() < 1e-10


def test_dichotomize_pools_non_reference_arms():
    arms = np.concatenate([np.zeros(300), np.ones(350), np.full(340, 2), np.full(352, 3)])
    t = make_demo_table(n=len(arms))
    t = t.replace_column("treatment", arms)
    out = dichotomize_treatment(t, "0")
    assert out.col_schema("treatment").kind == "binary"
    vals = out.columns["treatment"]
    assert (vals == 0).sum() == 300
    assert (vals == 1).sum() == 1042


def test_dichotomize_binary_passthrough_and_unknown_level():
    t = small_table()
    t2 = dichotomize_treatment(t, "0")
    assert t2.col_schema("arm").kind == "binary"
    # a second pass over an already-binary treatment changes nothing
    assert tables_equal(dichotomize_treatment(t2, "0"), t2)
    with pytest.raises(TableError):
        dichotomize_treatment(make_demo_table(n=40), "9")


def test_is_monotone_predicate():
    assert is_monotone(small_table())
    mono = small_table(mask={"z1": [True, False, True], "z2": [True, False, True], "y": [True, False, False]})
    assert is_monotone(mono)
    broken = small_table(mask={"z1": [True, False, True], "z2": [True, True, True]})
    assert not is_monotone(broken)


def test_masks_cannot_reveal_cells():
    t = small_table(mask={"z1": [True, False, True]})
    with pytest.raises(TableError):
        t.with_masks({"z1": np.array([True, True, True])})


@st.composite
def random_tables(draw):
    n = draw(st.integers(min_value=0, max_value=8))
    finite = st.floats(allow_nan=False, allow_infinity=False, width=32)
    cols = {
        "x": draw(st.lists(finite, min_size=n, max_size=n)),
        "arm": draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)),
        "z1": draw(st.lists(finite, min_size=n, max_size=n)),
        "z2": draw(st.lists(finite, min_size=n, max_size=n)),
        "y": draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)),
    }
    mask = {
        name: draw(st.lists(st.booleans(), min_size=n, max_size=n))
        for name in ("z1", "z2", "y")
    }
    return make_table(small_schema(), cols, mask)


@settings(max_examples=60, deadline=None)
@given(t=random_tables())
def test_csv_round_trip_property(t):
    import os
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "t.csv")
        write_csv(t, path)
        back = load_csv(path, small_schema())
        assert tables_equal(t, back)
