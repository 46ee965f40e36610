import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from costbench.costs import binary_alpha_matrix, bayes_optimal_reports
from costbench.data import (
    SplitIndices,
    UCI_SPECS,
    bayes_decision,
    bayes_decision_many,
    load_uci,
    posterior,
    posterior_pos_many,
    sample_synthetic,
    subsample_and_split,
)


# --- synthetic sampling -------------------------------------------------------


def test_synthetic_label_frequency():
    ds = sample_synthetic(100_000, rng_seed=0)
    freq = ds.labels.mean()
    # Binomial 3-sigma band around 1/2.
    assert abs(freq - 0.5) < 3 * 0.5 / np.sqrt(100_000)


def test_synthetic_conditional_mean():
    ds = sample_synthetic(100_000, rng_seed=1)
    x1 = ds.features[:, 0]
    pos = ds.labels == 1
    # E[x1 | y=+1] = E[x2] = 1/2; x1 has conditional std x2 <= 1.
    assert abs(x1[pos].mean() - 0.5) < 3 * 1.2 / np.sqrt(pos.sum())
    assert abs(x1[~pos].mean() + 0.5) < 3 * 1.2 / np.sqrt((~pos).sum())


def test_synthetic_scale_feature_in_unit_interval():
    ds = sample_synthetic(50_000, rng_seed=2)
    x2 = ds.features[:, 1]
    assert x2.min() >= 0.0 and x2.max() <= 1.0


def test_synthetic_deterministic():
    a = sample_synthetic(500, rng_seed=7)
    b = sample_synthetic(500, rng_seed=7)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)


def test_synthetic_rejects_empty():
    with pytest.raises(ValueError):
        sample_synthetic(0, rng_seed=0)


# --- posterior ------------------------------------------------------------------


def test_posterior_symmetry_at_zero():
    p = posterior(np.array([0.0, 0.5]))
    assert np.allclose(p.probs, [0.5, 0.5])


def test_posterior_boundary_value():
    # On the optimal boundary x1 = (x2/2) log(alpha/(1-alpha)) the positive
    # probability equals alpha.
    for alpha in (1 / 6, 1 / 4, 0.4):
        for x2 in (0.2, 0.7, 1.0):
            x1 = 0.5 * x2 * np.log(alpha / (1 - alpha))
            p = posterior(np.array([x1, x2]))
            assert p.probs[1] == pytest.approx(alpha, abs=1e-12)


def test_posterior_closed_forms_agree(rng):
    # Gaussian density ratio vs logistic form, 10^4 random points. The ratio
    # form underflows for |x1/x2| beyond ~38, so sample where it is computable.
    x = np.column_stack(
        [rng.normal(0, 0.5, 10_000), rng.uniform(0.2, 1.0, 10_000)]
    )
    eta = posterior_pos_many(x)
    z_minus = (x[:, 0] - x[:, 1]) / x[:, 1]
    z_plus = (x[:, 0] + x[:, 1]) / x[:, 1]
    f_minus = np.exp(-0.5 * z_minus**2)
    f_plus = np.exp(-0.5 * z_plus**2)
    ref = f_minus / (f_minus + f_plus)
    assert np.allclose(eta, ref, atol=1e-12)


def test_posterior_requires_positive_scale():
    with pytest.raises(ValueError):
        posterior(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        posterior(np.array([0.0, -1.0]))


# --- cost-optimal decisions ------------------------------------------------------


def test_bayes_decision_half_is_sign():
    pts = np.column_stack([np.linspace(-2, 2, 101), np.full(101, 0.5)])
    dec = bayes_decision_many(pts, 0.5)
    assert np.array_equal(dec, np.where(pts[:, 0] >= 0, 1, -1))


def test_bayes_decision_specific_point():
    # alpha = 1/6 at x = (-0.5, 0.6): threshold = 0.3 log(1/5) = -0.483; the
    # point sits below it, so the decision must be -1 and must agree with the
    # enumerated rule at the exact posterior.
    x = np.array([-0.5, 0.6])
    got = bayes_decision(x, 1 / 6)
    assert got == -1
    optimal = bayes_optimal_reports(binary_alpha_matrix(1 / 6), posterior(x))
    assert (1 if got > 0 else 0) in optimal


def test_bayes_decision_boundary_tie_goes_positive():
    x2 = 0.8
    alpha = 1 / 4
    x1 = 0.5 * x2 * np.log(alpha / (1 - alpha))
    assert bayes_decision(np.array([x1, x2]), alpha) == 1


def test_bayes_decision_agrees_with_enumeration_bulk():
    ds = sample_synthetic(100_000, rng_seed=3)
    x = ds.features
    for alpha in (1 / 6, 1 / 4, 1 / 2):
        closed = bayes_decision_many(x, alpha)
        eta = posterior_pos_many(x)
        cost = binary_alpha_matrix(alpha)
        c0 = eta * (1 - alpha)
        c1 = (1 - eta) * alpha
        lbar = np.minimum(c0, c1)
        want = (closed > 0).astype(int)
        chosen_cost = np.where(want == 1, c1, c0)
        assert (chosen_cost <= lbar + 1e-9).all()


def test_bayes_rule_beats_random_linear_rules():
    alpha = 1 / 6
    cost = binary_alpha_matrix(alpha)
    ds = sample_synthetic(100_000, rng_seed=4)
    x, y = ds.features, ds.labels
    def empirical_csl(preds01):
        costs = cost.entries[preds01, y]
        return costs.mean()
    bayes_preds = (bayes_decision_many(x, alpha) > 0).astype(int)
    bayes_csl = empirical_csl(bayes_preds)
    rng = np.random.default_rng(5)
    for _ in range(100):
        w = rng.normal(size=3)
        preds = ((x @ w[:2] + w[2]) >= 0).astype(int)
        assert bayes_csl <= empirical_csl(preds) + 1e-12


# --- splits -----------------------------------------------------------------------


def test_split_sizes_and_disjointness():
    ds = sample_synthetic(1000, rng_seed=6)
    sp = subsample_and_split(ds, 500, seed=0)
    assert len(sp.train) == 300 and len(sp.val) == 100 and len(sp.test) == 100
    all_idx = np.concatenate([sp.train, sp.val, sp.test])
    assert len(set(all_idx.tolist())) == 500


def test_split_deterministic():
    ds = sample_synthetic(600, rng_seed=6)
    a = subsample_and_split(ds, 400, seed=3)
    b = subsample_and_split(ds, 400, seed=3)
    assert np.array_equal(a.train, b.train)
    assert np.array_equal(a.val, b.val)
    assert np.array_equal(a.test, b.test)


@given(st.integers(10, 300), st.integers(0, 2**31), st.integers(0, 8))
@settings(max_examples=60)
def test_split_structure_property(n, seed, frac_idx):
    fracs = [(0.6, 0.2, 0.2), (0.5, 0.25, 0.25), (0.8, 0.1, 0.1)][frac_idx % 3]
    ds = sample_synthetic(400, rng_seed=1)
    sp = subsample_and_split(ds, n, fracs, seed=seed)
    sizes = (len(sp.train), len(sp.val), len(sp.test))
    assert sum(sizes) == n
    for size, frac in zip(sizes, fracs):
        assert abs(size - frac * n) <= 1
    joined = np.concatenate([sp.train, sp.val, sp.test])
    assert len(np.unique(joined)) == n
    assert joined.max() < len(ds)


def test_split_of_full_dataset_is_pure_split():
    ds = sample_synthetic(200, rng_seed=2)
    sp = subsample_and_split(ds, 200, seed=9)
    joined = np.sort(np.concatenate([sp.train, sp.val, sp.test]))
    assert np.array_equal(joined, np.arange(200))


def test_split_too_large_rejected():
    ds = sample_synthetic(100, rng_seed=0)
    with pytest.raises(ValueError):
        subsample_and_split(ds, 101, seed=0)


def test_split_indices_disjointness_enforced():
    with pytest.raises(ValueError):
        SplitIndices(np.array([0, 1]), np.array([1, 2]), np.array([3]), seed=0)


# --- UCI loading on fixture files --------------------------------------------------


GERMAN_ROWS = [
    # Mimics the credit-data format: categorical codes + integers, label 1/2.
    "A11 6 A34 A43 1169 A65 A75 4 A93 A101 4 A121 67 A143 A152 2 A173 1 A192 A201 1",
    "A12 48 A32 A43 5951 A61 A73 2 A92 A101 2 A121 22 A143 A152 1 A173 1 A191 A201 2",
    "A14 12 A34 A46 2096 A61 A74 2 A93 A101 3 A121 49 A143 A152 1 A172 2 A191 A201 1",
    "A11 42 A32 A42 7882 A61 A74 2 A93 A103 4 A122 45 A143 A153 1 A173 2 A191 A201 1",
    "A11 24 A33 A40 4870 A61 A73 3 A93 A101 4 A124 53 A143 A153 2 A173 2 A191 A201 2",
    "A14 36 A32 A46 9055 A65 A73 2 A93 A101 4 A124 35 A143 A153 1 A172 2 A192 A201 1",
]


@pytest.fixture
def german_dir(tmp_path, monkeypatch):
    root = tmp_path / "data"
    d = root / "german_credit"
    d.mkdir(parents=True)
    (d / "raw.data").write_text("\n".join(GERMAN_ROWS) + "\n")
    monkeypatch.setenv("COSTBENCH_DATA_DIR", str(root))
    return d


def test_load_german_fixture(german_dir):
    with pytest.warns(UserWarning):  # row count differs from the real dataset
        ds, cost = load_uci("german_credit")
    assert cost.entries.tolist() == [[0.0, 5.0], [1.0, 0.0]]
    assert len(ds) == 6
    assert ds.labels.tolist() == [0, 1, 0, 0, 1, 0]
    # Numeric columns standardized over the full dataset.
    prep = ds.preprocessing
    numeric_cols = [i for i, c in enumerate(prep.columns) if c.kind == "numeric"]
    assert numeric_cols, "expected numeric columns detected"
    feats = ds.features
    name_idx = {n: i for i, n in enumerate(prep.feature_names)}
    for c in prep.columns:
        if c.kind == "numeric":
            col = feats[:, name_idx[c.name]]
            assert abs(col.mean()) <= 1e-8
            if c.scale != 1.0:
                assert abs(col.var() - 1.0) <= 1e-6


def test_load_german_deferral_shares_data(german_dir):
    with pytest.warns(UserWarning):
        ds, cost = load_uci("german_credit_deferral")
    assert cost.entries.tolist() == [[0.0, 5.0], [1.0, 0.0], [0.5, 0.5]]
    assert len(ds) == 6


def test_preprocessing_replay_bit_for_bit(german_dir):
    with pytest.warns(UserWarning):
        ds, _ = load_uci("german_credit", use_cache=False)
    raw_rows = [r.split() for r in GERMAN_ROWS]
    feat_rows = [r[:-1] for r in raw_rows]
    replayed = ds.preprocessing.apply(feat_rows)
    assert np.array_equal(replayed, ds.features)


def test_preprocessing_unknown_category_rejected(german_dir):
    with pytest.warns(UserWarning):
        ds, _ = load_uci("german_credit", use_cache=False)
    row = GERMAN_ROWS[0].split()[:-1]
    row[0] = "A99"
    with pytest.raises(ValueError):
        ds.preprocessing.apply([row])


def test_cache_round_trip(german_dir):
    import costbench.data as data_mod

    with pytest.warns(UserWarning):
        first, _ = load_uci("german_credit")
    assert (german_dir / "processed.tsv").exists()
    # Force the second load through the on-disk cache, not the process memo.
    data_mod._LOAD_MEMO.clear()
    second, _ = load_uci("german_credit")
    assert np.array_equal(first.features, second.features)
    assert np.array_equal(first.labels, second.labels)
    assert second.label_map == first.label_map
    assert second.preprocessing is not None


def test_load_memo_reuses_dataset(german_dir):
    with pytest.warns(UserWarning):
        first, _ = load_uci("german_credit")
    second, _ = load_uci("german_credit")
    assert second is first  # same immutable object from the process memo


def test_manifest_mismatch_warns(german_dir):
    (german_dir / "manifest").write_text("sha256 " + "0" * 64 + "\n")
    with pytest.warns(UserWarning) as caught:
        load_uci("german_credit", use_cache=False)
    assert any("hash" in str(w.message) for w in caught)


def test_missing_file_raises(tmp_path, monkeypatch):
    monkeypatch.setenv("COSTBENCH_DATA_DIR", str(tmp_path))
    with pytest.raises(FileNotFoundError):
        load_uci("student_performance")


def test_unknown_dataset_rejected():
    with pytest.raises(ValueError):
        load_uci("mystery_data")


STUDENT_HEADER = "Marital status;Application mode;Age at enrollment;Target"
STUDENT_ROWS = [
    "1;17;20;Dropout",
    "1;15;19;Graduate",
    "2;1;37;Enrolled",
    "1;17;22;Graduate",
    "1;1;24;Dropout",
]


def test_load_student_fixture(tmp_path, monkeypatch):
    root = tmp_path / "data"
    d = root / "student_performance"
    d.mkdir(parents=True)
    (d / "raw.csv").write_text(STUDENT_HEADER + "\n" + "\n".join(STUDENT_ROWS) + "\n")
    monkeypatch.setenv("COSTBENCH_DATA_DIR", str(root))
    with pytest.warns(UserWarning):
        ds, cost = load_uci("student_performance")
    assert cost.n_reports == 3
    assert ds.labels.tolist() == [0, 2, 1, 2, 0]
    assert ds.label_map == {"Dropout": 0, "Enrolled": 1, "Graduate": 2}


DIABETES_HEADER = "Diabetes_012,HighBP,BMI,Smoker"
DIABETES_ROWS = ["0.0,1.0,40.0,1.0", "2.0,0.0,25.0,0.0", "1.0,1.0,28.0,0.0",
                 "0.0,0.0,27.0,1.0"]


def test_load_diabetes_fixture(tmp_path, monkeypatch):
    root = tmp_path / "data"
    d = root / "diabetes"
    d.mkdir(parents=True)
    (d / "raw.csv").write_text(DIABETES_HEADER + "\n" + "\n".join(DIABETES_ROWS) + "\n")
    monkeypatch.setenv("COSTBENCH_DATA_DIR", str(root))
    with pytest.warns(UserWarning):
        ds, cost = load_uci("diabetes")
    assert ds.labels.tolist() == [0, 2, 1, 0]
    assert cost.n_labels == 3


def test_incomplete_rows_dropped(tmp_path, monkeypatch):
    root = tmp_path / "data"
    d = root / "diabetes"
    d.mkdir(parents=True)
    rows = DIABETES_ROWS + ["1.0,,30.0,0.0"]
    (d / "raw.csv").write_text(DIABETES_HEADER + "\n" + "\n".join(rows) + "\n")
    monkeypatch.setenv("COSTBENCH_DATA_DIR", str(root))
    with pytest.warns(UserWarning):
        ds, _ = load_uci("diabetes", use_cache=False)
    assert len(ds) == 4
    assert ds.source["n_dropped_rows"] == 1


# --- real UCI files, exercised only when present -----------------------------------


@pytest.mark.parametrize("name", ["german_credit", "student_performance", "diabetes"])
def test_real_uci_when_available(name, monkeypatch):
    monkeypatch.delenv("COSTBENCH_DATA_DIR", raising=False)
    from costbench.data import data_dir

    spec = UCI_SPECS[name]
    raw = data_dir() / spec.dirname / spec.filename
    if not raw.exists():
        pytest.skip(f"{raw} not present; see scripts/fetch_uci.py")
    ds, cost = load_uci(name)
    assert len(ds) == spec.expected_rows
    assert ds.n_classes == spec.n_classes
