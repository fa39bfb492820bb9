# Blocks of large values: cluster shapes, extremal index, Poisson counts.

# %%
from tailproc import PathConfig, cluster_experiment, poisson_cluster_experiment, preset

model = preset("example-5.1", b=0.7)
res = cluster_experiment(model, PathConfig(n=10**6, u_target=500, r_exponent=0.3, seed=5))
st = res.stats
print(f"{st.n_clusters} clusters, {st.n_exceedances} exceedances")
print(f"N_c/N_e = {st.theta_hat_ratio:.3f} +- {st.theta_ratio_se():.3f}, exact {res.theta_exact:.3f}")

# %% anchored at the block maximum, a cluster is a single spike or a spike followed by 0.7 of it
for row in res.clusters.rows():
    print(*row[1:])

# %% cluster sizes
print(dict(sorted(st.size_hist.items())))

# %% number of exceeding blocks per path is nearly Poisson with mean theta * u
pois = poisson_cluster_experiment(preset("example-1.1"), PathConfig(n=10**5, u_target=1.0, seed=8), replicates=500)
print(f"mean {pois.mean:.3f} vs {pois.limit_mean:.3f}, dispersion {pois.dispersion:.3f}, chi2 p = {pois.p_value:.3f}")
for row in pois.table:
    print(*row)
