import math

import numpy as np
import pytest
from scipy import integrate, stats

from tailproc.models import model_from_dict, preset
from tailproc.simulate import (
    ConfigError,
    MarginalTail,
    PathConfig,
    PatternTable,
    campbell_check,
    cluster_experiment,
    exceedance_view,
    extract_clusters,
    poisson_cluster_experiment,
    randomized_origin_experiment,
    resolve_threshold,
    simulate_path,
    tail_process_experiment,
    write_csv,
)

SIGNED = model_from_dict(
    {
        "innovation": {"alpha": 0.9, "p": 0.4},
        "stencil": {
            "coefficients": ["1", "-eps * 0.8", "0.5 + eps2"],
            "marks": {"eps": {"values": [0, 1], "probs": [0.3, 0.7]}, "eps2": {"values": [-1, 0.5], "probs": [0.5, 0.5]}},
        },
        "attach": "innovation",
    }
)


def test_config_validation():
    with pytest.raises(ConfigError):
        PathConfig(n=100, block_len=2, window=1)
    with pytest.raises(ConfigError):
        PathConfig(n=100, u_target=0)
    with pytest.raises(ConfigError):
        PathConfig(n=100, engine="gpu")
    with pytest.raises(ConfigError):
        PathConfig(n=100).require_seed()
    cfg = PathConfig(n=10**6, r_exponent=0.3)
    assert cfg.r_n == 63 and cfg.k_n == 10**6 // 63


def test_iid_path_is_pareto():
    cfg = PathConfig(n=200_000, seed=1)
    x = simulate_path(preset("iid", alpha=2.0), cfg)
    assert x.min() >= 1.0
    assert stats.kstest(x, lambda t: 1 - t**-2.0).pvalue > 1e-3


def test_global_mark_switches_whole_path():
    # one mark per path: either iid Pareto (minimum near 1) or Z_t + Z_{t-1} (minimum >= 2)
    kinds = set()
    for rep in range(16):
        x = simulate_path(preset("example-5.2"), PathConfig(n=20_000, seed=6), replicate=rep)
        assert x.min() < 1.01 or x.min() >= 2.0
        kinds.add(x.min() >= 2.0)
    assert kinds == {True, False}


def test_paths_deterministic_across_workers():
    cfg = PathConfig(n=300_000, seed=9, chunk_size=1 << 14)
    for model in (preset("example-5.2"), SIGNED):
        a = simulate_path(model, cfg, replicate=3, workers=1)
        b = simulate_path(model, cfg, replicate=3, workers=4)
        assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate_path(SIGNED, cfg, replicate=4))


def _sum_sf(x, alpha):
    # P(Z0 + Z1 > x) for iid Pareto(alpha), by quadrature
    f = lambda z: alpha * z ** (-alpha - 1) * min(1.0, (x - z) ** -alpha if x - z > 0 else 1.0)
    val = integrate.quad(f, 1.0, x - 1.0, limit=200)[0] if x > 2 else 1.0
    return val + (x - 1.0) ** -alpha if x > 2 else 1.0


@pytest.mark.parametrize("x", [5.0, 50.0, 500.0])
def test_marginal_tail_against_quadrature(x):
    alpha = 1.2
    exact = 0.5 * x**-alpha + 0.5 * _sum_sf(x, alpha)
    assert MarginalTail(preset("example-1.1", alpha=alpha)).sf(x) == pytest.approx(exact, rel=0.01)


def test_marginal_tail_against_empirical():
    cfg = PathConfig(n=10**6, seed=4)
    x = simulate_path(SIGNED, cfg)
    tail = MarginalTail(SIGNED)
    for q in (1e-2, 1e-3):
        c = tail.isf(q)
        hits = np.sum(np.abs(x) > c)
        assert abs(hits - q * cfg.n) < 4 * math.sqrt(q * cfg.n)


def test_threshold_rules_agree():
    m = preset("example-1.1")
    a = resolve_threshold(m, PathConfig(n=10**5, u_target=100))
    b = resolve_threshold(m, PathConfig(n=10**5, u_target=100, threshold_rule="pilot"))
    assert a == pytest.approx(b, rel=0.05)
    assert resolve_threshold(m, PathConfig(n=10**5, threshold=7.0)) == 7.0


@pytest.mark.parametrize("model", [preset("example-1.1"), preset("example-5.2"), SIGNED], ids=["1.1", "5.2", "signed"])
def test_sparse_engine_matches_dense_in_law(model):
    stats_ = {}
    for eng in ("dense", "sparse"):
        cfg = PathConfig(n=2000, u_target=20, seed=5, engine=eng)
        c = resolve_threshold(model, cfg)
        cnt, adj, pos = [], [], []
        for rep in range(1500):
            idx, v = exceedance_view(model, cfg, rep, c)
            cnt.append(idx.size)
            adj.append(np.isin(idx + 1, idx).sum())
            pos.append((v > 0).sum())
        stats_[eng] = [np.array(cnt), np.array(adj), np.array(pos)]
    for d, s in zip(stats_["dense"], stats_["sparse"]):
        se = math.sqrt(d.var() / d.size + s.var() / s.size)
        assert abs(d.mean() - s.mean()) < 4 * se + 1e-12


def test_sparse_view_matches_its_dense_path():
    # with a floor below every value the sparse engine falls back to dense
    cfg = PathConfig(n=5000, seed=3, engine="sparse")
    idx, v = exceedance_view(preset("example-1.1"), cfg, 0, 0.5)
    x = simulate_path(preset("example-1.1"), cfg)
    assert np.array_equal(idx, np.arange(5000)) and np.array_equal(v, x)


def test_extract_clusters_by_hand():
    path = np.array([0, 3, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 5, 0, 0, 0, 0, 9, 0.5])
    st = extract_clusters(path, PathConfig(n=len(path), block_len=5, u_target=1), threshold=1.0)
    assert (st.n_exceedances, st.n_clusters, st.retained_length) == (4, 3, 20)
    assert st.size_hist == {2: 1, 1: 2}
    # anchored at the block maximum, support relative to it
    assert st.cluster_counts == {(0, 1, 1): 1, (0, 1, 0): 2}
    assert st.theta_hat_ratio == 0.75


def test_pattern_table_rows():
    t = PatternTable("window", {(0, 1, 0): 30, (1, 1, 0): 70}, {(0, 1, 0): 0.5, (0, 1, 1): 0.5}, 100)
    rows = {r[0]: r for r in t.rows()}
    assert rows["010"][3] == 0.3 and rows["011"][2] == 0 and rows["110"][4] == 0.0
    assert rows["010"][5] == pytest.approx(-4.0)
    assert t.tv_distance(t.exact) == pytest.approx(0.7)


def test_tail_process_small():
    res = tail_process_experiment(preset("example-1.1"), PathConfig(n=200_000, u_target=300, seed=13))
    assert 200 < res.n_exceedances < 400
    assert res.window.max_abs_z() < 4.5 and res.support.max_abs_z() < 4.5


def test_cluster_experiment_small_and_deterministic():
    m = preset("example-5.1", b=0.7)
    cfg = PathConfig(n=300_000, u_target=200, r_exponent=0.3, seed=21)
    a = cluster_experiment(m, cfg, replicates=2)
    b = cluster_experiment(m, PathConfig(n=300_000, u_target=200, r_exponent=0.3, seed=21, workers=3), replicates=2)
    assert a.stats == b.stats
    st = a.stats
    assert abs(st.theta_hat_ratio - a.theta_exact) < 4 * st.theta_ratio_se()
    assert a.clusters.max_abs_z() < 4.5


def test_poisson_small():
    res = poisson_cluster_experiment(preset("example-1.1"), PathConfig(n=10_000, u_target=1.0, seed=8), replicates=400)
    assert res.p_value > 1e-3 and abs(res.mean_z) < 4
    assert sum(r[1] for r in res.table) == 400


def test_randomized_origin_small():
    m = preset("example-5.2")
    res = randomized_origin_experiment(m, PathConfig(n=100_000, u_target=200, engine="sparse", seed=7), replicates=3000)
    assert res.n_sampled == 3000
    t = res.table
    assert abs(t.freq((0, 1, 0)) - 0.5) < 4 * t.sigma(0.5)
    assert t.tv_distance(t.exact) > 0.1


def test_campbell_small():
    res = campbell_check(preset("example-1.1"), PathConfig(n=5000, u_target=2.0, seed=1), "t-origin", 3000)
    assert res.rhs == pytest.approx(1.0) and abs(res.z) < 4
    res = campbell_check(preset("example-1.1"), PathConfig(n=5000, u_target=2.0, seed=1), "one", 3000)
    assert res.rhs == pytest.approx(2.0) and abs(res.z) < 4


def test_csv_full_precision(tmp_path):
    p = tmp_path / "t.csv"
    write_csv(p, ("a", "b"), [(0.1 + 0.2, 3)])
    assert p.read_text() == "a,b\n0.30000000000000004,3\n"


def test_tail_constant_ratio():
    # P(X_0 > x) / P(Z_0 > x) -> 1 + E[eps] = 3/2 for b = 1
    tail = MarginalTail(preset("example-1.1"))
    assert tail.sf(1e5) / 1e5**-1.2 == pytest.approx(1.5, rel=0.01)


def test_backward_support_pattern_for_large_b():
    b, a = 2.0, 1.2
    m = preset("example-5.1", b=b, alpha=a)
    res = tail_process_experiment(m, PathConfig(n=10**6, u_target=1000, seed=17))
    p = b**a / (2 + b**a)
    assert abs(res.support.freq((1, 1, 0)) - p) < 3.5 * res.support.sigma(p)


@pytest.mark.parametrize("b", [0.6, 2.0])
def test_randomized_cluster_law(b):
    from tailproc.simulate import randomized_cluster_experiment

    m = preset("example-5.1", b=b)
    res = randomized_cluster_experiment(m, PathConfig(n=50_000, u_target=20, r_exponent=0.3, seed=3), replicates=1500)
    ba = b**1.2
    single = 0.5 if b <= 1 else 1 / (1 + ba)
    assert abs(res.table.freq((0, 1, 0)) - single) < 4 * res.table.sigma(single)


def test_iid_trivial_cases():
    m = preset("iid")
    # independent exceedances share a block with probability about r u / n
    cfg = PathConfig(n=10**6, u_target=200, seed=1)
    st = cluster_experiment(m, cfg).stats
    pair = cfg.r_n * cfg.u_target / cfg.n
    assert abs(st.theta_hat_ratio - (1 - pair / 2)) < 4 * math.sqrt(pair / st.n_exceedances)
    pois = poisson_cluster_experiment(m, PathConfig(n=10_000, u_target=1.0, seed=2), replicates=500)
    assert abs(pois.mean - 1.0) < 4 * math.sqrt(pois.variance / 500)


def test_estimator_table():
    from tailproc.simulate import estimator_convergence

    rows = estimator_convergence(preset("iid"), PathConfig(u_target=400, seed=5), [10_000, 100_000])
    assert [r.n for r in rows] == [10_000, 100_000]
    for r in rows:
        assert r.theta_exact == 1.0 and abs(r.exceedance_ratio - 1) < 4 / math.sqrt(400)
