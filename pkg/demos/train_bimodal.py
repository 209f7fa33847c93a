"""Train a small MLP denoiser on a 1-d bimodal mixture.

A Gaussian fit to the same data gives the baseline; the trained net should
beat it clearly. Takes about a minute.
"""

import numpy as np

from immse import (
    MlpDenoiser,
    TrainConfig,
    as_denoiser,
    estimate_moments,
    make_rng,
    moment_matched_sampler,
    nll_continuous,
    train,
)
from immse import sources

src = sources.bimodal1d()
X = src.sample(10_000, make_rng(0, 10))
spec = estimate_moments(X)
sampler = moment_matched_sampler(spec.eigvals)

res = train(MlpDenoiser(1, seed=0), X, sampler, TrainConfig(steps=20_000, seed=0))
# moving average of the per-step bound, every 2000 steps
smooth = np.convolve(res.nll, np.ones(500) / 500, mode="valid")
for step in range(0, len(smooth), 2000):
    print(f"step {step + 500:6d}  running NLL bound {smooth[step]:.4f}")

Xv = src.sample(10_000, make_rng(0, 11))
est = nll_continuous(as_denoiser(res.net), Xv, spec, sampler, n_alpha=200, n_eps=4, seed=1, stratified=True)
print(f"held-out NLL {est.nats:.4f} +- {est.std_error_nats:.4f} nats")
print(f"Gaussian fit {spec.entropy():.4f} nats")
