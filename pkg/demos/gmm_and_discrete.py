"""Oracle denoisers on a two-component mixture and on binary data.

The mixture estimate should land on the entropy obtained by quadrature;
the discrete estimate on {-1, 1} should land on log 2.
"""

import numpy as np
from scipy.integrate import quad

from immse import make_rng, moment_matched_sampler, nll_continuous, nll_discrete
from immse import sources

gmm = sources.gmm2()
spec = gmm.moments()


def neg_p_log_p(x):
    m, v = gmm.means[:, 0], gmm.variances[:, 0]
    p = np.sum(gmm.weights * np.exp(-((x - m) ** 2) / (2 * v)) / np.sqrt(2 * np.pi * v))
    return -p * np.log(p)


H = quad(neg_p_log_p, -8, 8, limit=200)[0]
X = gmm.sample(10_000, make_rng(0, 10))
sampler = moment_matched_sampler(spec.eigvals, n_scales=12.0)
est = nll_continuous(gmm.denoiser(), X, spec, sampler, n_alpha=1000, n_eps=1, seed=0, stratified=True)
print(f"mixture: {est.nats:.4f} +- {est.std_error_nats:.4f} nats, entropy {H:.4f}")

atoms = sources.binary()
Xb = atoms.sample(1000, make_rng(0, 11))
est = nll_discrete(atoms.denoiser(), Xb, 2.0, n_alpha=1000, n_eps=10, seed=0, stratified=True)
print(f"binary:  {est.nats:.4f} +- {est.std_error_nats:.4f} nats, log 2 = {np.log(2):.4f}")
print(f"tail constant {est.tail_constant:.3g} nats")
