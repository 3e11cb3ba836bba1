import math
import pathlib

import numpy as np
import pytest

import dsagen

ROOT = pathlib.Path(__file__).resolve().parents[2]
DATA = ROOT / "data"


@pytest.fixture(scope="module")
def case9():
    return dsagen.load_network(str(DATA / "case9.m"), str(DATA / "case9.dyn.json"))


def test_network_and_power_flow(case9):
    assert case9.n_buses == 9
    assert case9.n_gens == 3
    x = case9.nominal_point()
    assert len(x) == len(case9.input_names)
    pf = case9.solve_pf(x)
    assert pf["converged"]
    assert pf["vm"].shape == (9,)
    zeta = case9.zeta_min(x)
    assert zeta is not None and -1.0 <= zeta <= 1.0


def test_kernels():
    assert dsagen.gini([5.0, 5.0]) == 0.5
    assert dsagen.f1([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
    pts = dsagen.lhc_sample(np.zeros(3), np.ones(3), 10, seed=4)
    assert pts.shape == (10, 3)
    for j in range(3):
        assert sorted(np.floor(pts[:, j] * 10).astype(int)) == list(range(10))


def test_tree_on_a_threshold():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(200, 2))
    y = (X[:, 1] > 0.2).astype(int).tolist()
    tree = dsagen.train_tree(X, y, max_depth=3, ccp_alpha=0.0)
    assert tree.predict(X) == y
    assert '"threshold"' in tree.to_json()


def test_errors_are_translated(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("no_such_key = 1\n")
    with pytest.raises(dsagen.DsagenError):
        dsagen.load_config(str(bad))


def test_small_pipeline(tmp_path):
    cfg = dsagen.load_config(
        str(ROOT / "configs" / "case9.toml"),
        ["N1=4", "obbt_iters=1", "N2=4", "volume_samples=200", "n=40", f"out_dir='{tmp_path}'"],
    )
    summary = dsagen.polytope(cfg)
    assert summary["volume_history"][-1] <= 1.0
    data = dsagen.generate(cfg)
    assert len(data) > 0
    cols = data.columns()
    assert cols["X"].shape == (len(data), len(data.names))
    lhc = dsagen.benchmark(cfg, "lhc")
    assert 0.0 <= lhc.stats()["feasible"] <= 1.0
    again = dsagen.read_dataset(str(tmp_path / "proposed.csv"))
    assert len(again) == len(data)
    assert all(math.isnan(z) or -1 <= z <= 1 for z in cols["zeta"])
