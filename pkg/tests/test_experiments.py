import json
import math

import numpy as np
import pytest

from sedid import experiments as ex
from sedid.errors import InvalidArgument


def tiny_spec(**kw):
    base = dict(T=10, beta_start=0.01, beta_end=0.5, train_steps=200, n_train=96, n_real=48,
                n_generated=48, deltas=(2,), t_se_grid=(2, 4), baseline_ts=(1, 5), nn_epochs=3,
                hidden=(16, 16), seed=3)
    base.update(kw)
    return ex.ExperimentSpec(**base)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    spec = tiny_spec()
    prep, sweep, comp = ex.run_experiment(spec, out)
    return spec, prep, sweep, comp, out


def test_toy_dataset_determinism():
    a = ex.make_toy_dataset("gauss_mixture", 4, 1)
    b = ex.make_toy_dataset("gauss_mixture", 4, 1)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_ring_radius_before_normalisation():
    pts = np.stack(ex.make_toy_dataset("ring", 2000, 2, normalized=False))
    r = np.hypot(pts[:, 0] - 0.5, pts[:, 1] - 0.5)
    assert r.min() >= 0.8 - 1e-12 and r.max() <= 1.2 + 1e-12


def test_bars_shape_and_unknown_kind():
    x = ex.make_toy_dataset("bars8x8", 3, 0, normalized=False)
    assert x[0].shape == (8, 8)
    assert all(v.sum() == 8 for v in x)
    with pytest.raises(InvalidArgument):
        ex.make_toy_dataset("spiral", 3, 0)


def test_normalisation_map():
    assert ex.normalize(0.5) == 0.0
    assert ex.normalize(1.0) == 1.0


def test_default_grid_geometry():
    spec = ex.ExperimentSpec()
    cells = spec.cells()
    assert (0, 5) in cells and (95, 5) in cells and (75, 25) in cells
    assert all(t % d == 0 and t + d <= 100 for t, d in cells)
    assert spec.baseline_grid()[:3] == [1, 5, 10]


def test_tiny_sweep_has_two_finite_cells(tiny_run):
    _, prep, sweep, comp, _ = tiny_run
    assert [c.key for c in sweep.cells] == ["2_2", "4_2"]
    for c in sweep.cells:
        assert c.ok
        d = c.metrics.to_dict()
        assert all(math.isfinite(d[k]) for k in ("auc", "auc_raw", "best_acc"))
        assert len(c.scores) == len(prep.labels) == 96


def test_comparison_protocol(tiny_run):
    spec, prep, sweep, comp, _ = tiny_run
    assert [r["detector"] for r in comp.rows] == [ex.BASELINE, ex.STAT, ex.NNS]
    assert len(comp.train_idx) == int(0.1 * 96)
    assert not set(comp.train_idx) & set(comp.holdout_idx)
    assert len(comp.nn_scores) == len(comp.holdout_idx)


def test_output_layout(tiny_run):
    *_, out = tiny_run
    for cell in ("2_2", "4_2", "baseline_1", "baseline_5"):
        assert (out / "sweep" / cell / "scores.csv").exists()
        assert (out / "sweep" / cell / "metrics.json").exists()
    header = (out / "report.csv").read_text().splitlines()[0]
    assert header == "t_se,delta,detector,auc,auc_raw,best_acc,tpr@0.01,tpr@0.001"
    assert (out / "sweep" / "2_2" / "scores.csv").read_text().startswith("id,label,score\n")


def test_argmax_matches_stored_metrics(tiny_run):
    *_, out = tiny_run
    report = json.loads((out / "report.json").read_text())
    stored = {}
    for cell in ("2_2", "4_2"):
        stored[cell] = json.loads((out / "sweep" / cell / "metrics.json").read_text())["auc"]
    assert report["argmax"]["auc"] == max(stored, key=stored.get)


def test_report_rebuild_is_byte_stable(tiny_run):
    *_, out = tiny_run
    before = {p: (out / p).read_bytes() for p in ("report.json", "report.csv", "curves.csv")}
    ex.write_report(out)
    for p, data in before.items():
        assert (out / p).read_bytes() == data


def test_invalid_cell_marked_failed(tmp_path):
    spec = tiny_spec(t_se_grid=(2, 3), detectors=(ex.STAT,), train_steps=50)
    prep, sweep, _ = ex.run_experiment(spec, tmp_path)
    failed = [c for c in sweep.cells if not c.ok]
    assert [c.key for c in failed] == ["3_2"]
    assert "invalid StepConfig" in failed[0].error
    meta = json.loads((tmp_path / "sweep" / "3_2" / "metrics.json").read_text())
    assert meta["status"] == "failed" and "invalid StepConfig" in meta["reason"]
    assert json.loads((tmp_path / "report.json").read_text())["failed"][0]["cell"] == "3_2"


def test_same_seed_identical_files(tmp_path):
    spec = tiny_spec(train_steps=100)
    ex.run_experiment(spec, tmp_path / "a")
    ex.run_experiment(spec, tmp_path / "b", jobs=3)
    for name in ("report.json", "report.csv", "curves.csv", "compare.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_spec_parsing():
    vals = ex.parse_spec_text("T = 50  # comment\ndeltas = 5,10\ndetectors = SeDID_Stat\nbeta-end=0.1\n")
    assert vals == {"T": 50, "deltas": (5, 10), "detectors": ("SeDID_Stat",), "beta_end": 0.1}
    with pytest.raises(InvalidArgument, match="frobnicate"):
        ex.parse_spec_text("frobnicate = 1")
    with pytest.raises(InvalidArgument):
        ex.parse_spec_text("T: 5")
    with pytest.raises(InvalidArgument):
        ex.parse_spec_text("T = many")


def test_load_spec_overrides(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("T = 50\nseed = 4\n")
    spec = ex.load_spec(p, {"seed": 9, "T": None})
    assert (spec.T, spec.seed) == (50, 9)


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        ex.ExperimentSpec(n_real=1)
    with pytest.raises(InvalidArgument):
        ex.ExperimentSpec(detectors=("oracle",))
