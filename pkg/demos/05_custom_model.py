# Describing a model in YAML, with signed innovations and marks attached to innovations.

# %%
import yaml

from tailproc.distcalc import exceedance_stationarity_mc, extremal_index_inverse_count
from tailproc.models import ma_extremal_index, ma_spectral, model_from_dict
from tailproc.seqcore import tau_cyclic, tau_nearest

text = """
name: signed-three-lag
innovation: {alpha: 0.9, p: 0.4}
stencil:
  coefficients: ["1", "-eps * 0.8", "0.5 + eps2"]
  marks:
    eps: {values: [0, 1], probs: [0.3, 0.7]}
    eps2: {values: [-1, 0.5], probs: [0.5, 0.5]}
attach: innovation
"""
model = model_from_dict(yaml.safe_load(text))
print(model.describe())

# %%
tail = ma_spectral(model)
print(len(tail.spectral.atoms), "atoms; theta =", ma_extremal_index(model), extremal_index_inverse_count(tail))

# %% shifting the origin to another exceedance through a bijection does not change the law
for tau in (tau_cyclic, tau_nearest):
    rep = exceedance_stationarity_mc(tail, tau, n_samples=100_000, seed=1)
    print(tau.__name__, "consistent:", rep.consistent, "max |z| =", round(rep.max_z, 2))
