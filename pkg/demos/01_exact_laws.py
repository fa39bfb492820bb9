# Exact tail laws of a two-lag moving average with a random coefficient.
#
# X_t = Z_t + eps_t * b * Z_{t-1}, Z Pareto(alpha), eps_t fair coin flips.
# Everything below is computed exactly by enumeration; no sampling.

# %%
from tailproc import preset, ma_spectral, ma_anchored, ma_extremal_index, tcf_check
from tailproc.distcalc import AtomicDist, TailModel, anchored_from_spectral, rs_transform

model = preset("example-5.1", b=0.5, alpha=0.8)
print(model.describe())

# %% the spectral tail process: where the rest of the path sits, seen from an exceedance
tail = ma_spectral(model)
for atom, w in tail.spectral:
    print(f"{w:.4f}  {atom}")

# %% it satisfies the time-change identity
print(tcf_check(tail))

# %% a typical cluster, anchored at its first maximum
for atom, w in ma_anchored(model).q:
    print(f"{w:.4f}  {atom}")

# %% extremal index against the closed form 2 / (2 + b^alpha)
print(ma_extremal_index(model), 2 / (2 + 0.5**0.8))

# %% for b > 1 the anchored law shifts the larger coefficient to the origin
for atom, w in ma_anchored(preset("example-5.1", b=2.0, alpha=1.5)).q:
    print(f"{w:.4f}  {atom}")

# %% a law that is *not* a spectral tail process, and where it breaks
bad = TailModel(1.0, AtomicDist.from_text("0.5 | 0:1\n0.5 | 0:1,1:1\n"))
rep = tcf_check(bad)
print(rep.valid, "witness:", rep.witness)

# %% going to clusters and back is lossless, and the RS map leaves tail laws alone
back = rs_transform(tail)
print(back.spectral.distance(tail.spectral), anchored_from_spectral(tail).q.distance(ma_anchored(model).q))
