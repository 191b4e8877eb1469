# coding: utf-8

# # Mean squared error over repeated trials
#
# Each trial draws a fresh observation set at known parameters, fits it and
# keeps the estimate. The MSE splits into the spread of the estimates plus
# the squared offset of their mean.

# In[1]:

from knnrice import FitConfig, LlfConfig, ShapingParams, campaign
from knnrice.bench import mse_identity_holds


# The settings are far below desk scale, so the demo finishes in about a
# minute. With only 2000 observations r is weakly identified, so MSE(r) is
# large. sigma_z^2 is much better determined. The CLI `bench` subcommand
# runs full campaigns.

# In[2]:

cfg = FitConfig(method="ga", llf=LlfConfig(L=20_000, k=15), ga_population=20, ga_generations=8)
for s2 in (0.2, 0.6, 1.0):
    rep = campaign(ShapingParams(4.0, s2), 2000, cfg, trials=4, master_seed=7)
    print(
        f"sigma_z2={s2}: MSE(r)={rep.r.mse:.3g}  MSE(sigma_z2)={rep.sigma_z2.mse:.3g}  "
        f"bias(sigma_z2)={rep.sigma_z2.bias:+.3f}  identity ok={mse_identity_holds(rep)}"
    )
