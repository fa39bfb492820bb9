# Does a simulated path look like its tail process near large values?

# %%
import numpy as np

from tailproc import PathConfig, preset, simulate_path
from tailproc.distcalc import window_pattern_law
from tailproc.models import ma_spectral
from tailproc.simulate import empirical_tail_process, resolve_threshold

model = preset("example-1.1")
cfg = PathConfig(n=10**6, u_target=1000, seed=11)
x = simulate_path(model, cfg)
c = resolve_threshold(model, cfg)
print(f"threshold c_n = {c:.1f}, exceedances = {(np.abs(x) > c).sum()} (target {cfg.u_target:g})")

# %% exceedance patterns on -1..1 around every exceedance
res = empirical_tail_process(x, cfg, c, model)
for row in res.window.rows():
    print(*row[1:])

# %% the exact law the table is compared with
print(window_pattern_law(ma_spectral(model), 1))

# %% heavier neighbours: with b = 2 the pattern law is no longer uniform
m2 = preset("example-5.1", b=2.0)
res2 = empirical_tail_process(simulate_path(m2, cfg), cfg, resolve_threshold(m2, cfg), m2)
for row in res2.window.rows():
    print(*row[1:])
