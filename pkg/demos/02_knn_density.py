# coding: utf-8

# # kNN density of channel samples
#
# In one dimension the ball around a sample is an interval. Its half-width is
# the distance to the k-th nearest neighbour, and the density estimate is
# (k / (M - 1)) / (2 * rho). Joining the estimates linearly and rescaling
# so that the curve integrates to one gives a usable density and CDF.

# In[1]:

import numpy as np

from knnrice import ShapingParams, cdf_at, density_at, estimate, pdf_reference, sample
from knnrice.gof import k_sweep, ks_critical, ks_test


# Four evenly spaced points with k = 1 can be worked out by hand: every
# neighbour is 1 away, so every density is (1/3)/2 = 1/6, the trapezoid area
# is 1/2 and the normalisation factor is 2.

# In[2]:

est = estimate(np.array([0.0, 1.0, 2.0, 3.0]), k=1)
est.densities, est.c, cdf_at(est, 2.0)


# Pointwise, the estimate scatters around the exact density with a relative
# error of roughly 1/sqrt(k). A larger k shows the agreement more clearly.

# In[3]:

params = ShapingParams(4.0, 0.25)
x = sample(params, 10_000, seed=3).values
for k in (15, 200):
    est = estimate(x, k=k)
    for i in (0.5, 1.0, 1.5):
        print(f"k={k:3d} I={i}: kNN {density_at(est, i):.4f}   exact {pdf_reference(params, i):.4f}")


# Small k follows the samples too closely and large k over-smooths. The mean
# KS statistic against the samples themselves shows the trade-off. A small
# sweep is enough to see the minimum.

# In[4]:

rows, best = k_sweep(params, 1000, range(2, 21, 2), runs=20, seed=0)
for row in rows:
    print(f"k={row.k:2d}  mean T={row.mean_T:.4f}")
print("best k", best, "critical", round(ks_critical(0.05, 1000), 4))


# In[5]:

res = ks_test(estimate(x[:1000], best), x[:1000])
res.statistic, res.critical, res.passed
