# Two models with the same tail process but different clusters.
#
# In example-5.2 the coin is flipped once per path, so within a path either
# every large value has a twin or none does.  Picking one exceedance per path
# at random then over-weights the paths with lone spikes.

# %%
from tailproc import PathConfig, preset, randomized_origin_experiment
from tailproc.models import ma_spectral

a, b = preset("example-5.2"), preset("example-5.1")
print(ma_spectral(a).spectral.distance(ma_spectral(b).spectral))  # identical tail laws

# %%
for model in (a, b):
    cfg = PathConfig(n=10**6, u_target=500, r_exponent=0.6, engine="sparse", seed=7)
    res = randomized_origin_experiment(model, cfg, replicates=4000)
    print(model.name, "TV to tail law:", round(res.table.tv_distance(res.table.exact), 3))
    for row in res.table.rows():
        print("   ", *row[1:])
