import pytest

from costbench.costs import save_cost_matrix, severity_three_class_matrix
from costbench.verify import run_verify, verify_matrix_files


def test_fast_suite_all_pass(tmp_path):
    ok, results = run_verify(fast=True)
    assert ok
    names = [r.name for r in results]
    assert any("embedding-conditions" in n for n in names)
    assert any("alpha-separation" in n for n in names)
    assert "gradient-finite-difference" in names
    assert "cost-optimal-decision-agreement" in names
    for r in results:
        assert r.ok, r.line()


def test_report_artifacts_written(tmp_path):
    ok, _ = run_verify(fast=False, report_dir=tmp_path / "rep",
                       extra_matrices={})
    assert ok
    assert (tmp_path / "rep" / "regret_profile.csv").exists()
    svg = (tmp_path / "rep" / "regret_scatter.svg").read_text()
    assert svg.startswith("<svg")


def test_extra_matrix_included(tmp_path):
    extra = {"doubled": severity_three_class_matrix().scaled(2.0)}
    ok, results = run_verify(fast=True, extra_matrices=extra)
    assert ok
    assert any("doubled" in r.name for r in results)


def test_matrix_file_loading(tmp_path):
    good = tmp_path / "good.txt"
    save_cost_matrix(severity_three_class_matrix(), good)
    loaded = verify_matrix_files([good])
    assert "good" in loaded
    bad = tmp_path / "bad.txt"
    bad.write_text("2 2\n0 nope\n1 0\n")
    with pytest.raises(ValueError):
        verify_matrix_files([bad])
