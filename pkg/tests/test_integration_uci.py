"""End-to-end harness runs on a generated file in the credit-data format.

The real UCI files are not bundled; this builds a plausible 700-row file with
the same column structure (categorical codes + integers, labels 1/2), then
drives the full pipeline: parse -> one-hot/standardize -> subsample -> train
all losses -> evaluate, for both the plain and the deferral cost matrices.
"""
from dataclasses import replace

import numpy as np
import pytest

from costbench.harness import ExperimentConfig, aggregate, run_experiment


def write_pseudo_german(path, n=700, seed=0):
    rng = np.random.default_rng(seed)
    cats = {
        0: ["A11", "A12", "A13", "A14"],
        2: ["A30", "A31", "A32", "A33", "A34"],
        5: ["A61", "A62", "A63", "A64", "A65"],
        8: ["A91", "A92", "A93", "A94"],
    }
    lines = []
    for _ in range(n):
        # A latent score drives both features and the label so models have
        # something to learn.
        z = rng.normal()
        row = []
        for col in range(9):
            if col in cats:
                idx = min(int(abs(z + rng.normal())), len(cats[col]) - 1)
                row.append(cats[col][idx])
            else:
                row.append(str(int(20 + 10 * z + rng.normal(0, 5))))
        label = "2" if z + rng.normal(0, 1.2) > 0.5 else "1"
        row.append(label)
        lines.append(" ".join(row))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def pseudo_german(tmp_path, monkeypatch):
    root = tmp_path / "data"
    d = root / "german_credit"
    d.mkdir(parents=True)
    write_pseudo_german(d / "raw.data")
    monkeypatch.setenv("COSTBENCH_DATA_DIR", str(root))
    import costbench.data as data_mod

    data_mod._LOAD_MEMO.clear()
    return d


def test_full_pipeline_on_credit_format(pseudo_german):
    cfg = ExperimentConfig(
        dataset="german_credit",
        n_samples=300,
        n_seeds=2,
        losses=("cross_entropy", "cross_entropy_post", "embedding",
                "embedding_softmax", "scaled_cross_entropy"),
        n_epochs=150,
        learning_rate=0.5,
    )
    with pytest.warns(UserWarning):  # fixture row count differs from the registry
        rows = run_experiment(cfg)
    assert len(rows) == 10
    for r in rows:
        assert not r.failed
        assert np.isfinite(r.csl)
        assert r.accuracy is not None
    cells = aggregate(rows)
    assert any(c.metric == "csl" for c in cells)


def test_full_pipeline_deferral_variant(pseudo_german):
    cfg = ExperimentConfig(
        dataset="german_credit_deferral",
        n_samples=300,
        n_seeds=2,
        losses=("cross_entropy", "embedding", "embedding_softmax",
                "scaled_cross_entropy"),
        n_epochs=150,
        learning_rate=0.5,
    )
    with pytest.warns(UserWarning):
        rows = run_experiment(cfg)
    assert len(rows) == 8
    for r in rows:
        assert not r.failed
        assert r.accuracy is None  # three reports over two labels
        if r.loss in ("embedding", "embedding_softmax"):
            assert r.confusion.shape == (3, 2)
    # Cross-entropy can never defer: its confusion's third row stays empty.
    ce_rows = [r for r in rows if r.loss == "cross_entropy"]
    for r in ce_rows:
        assert r.confusion[2].sum() == 0
