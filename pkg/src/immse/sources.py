"""Built-in synthetic sources, selectable by name.

Each source has an analytic oracle denoiser and analytic noisy marginal,
so estimators can be checked without external data.
"""

from __future__ import annotations

import numpy as np

from .core_math import GaussianSpec
from .denoise import DiagonalGmm, DiscreteAtoms, GaussianDenoiser

LATTICE_DELTA = 0.5


def gaussian(d: int = 1) -> GaussianSpec:
    """Standard normal in ``d`` dimensions."""
    return GaussianSpec.isotropic(d)


def gmm2() -> DiagonalGmm:
    """Symmetric 1-D pair at +-1 with component variance 0.09."""
    return DiagonalGmm([0.5, 0.5], [-1.0, 1.0], [0.09, 0.09])


def bimodal1d() -> DiagonalGmm:
    """Asymmetric 1-D two-component mixture used for training runs."""
    return DiagonalGmm([0.3, 0.7], [-1.5, 1.0], [0.25, 0.16])


def lattice2() -> DiscreteAtoms:
    """Uniform over the 5 x 5 grid {-1, -0.5, 0, 0.5, 1}^2."""
    return DiscreteAtoms.lattice(-1.0 + LATTICE_DELTA * np.arange(5), 2)


def binary() -> DiscreteAtoms:
    """Fair coin on {-1, +1}."""
    return DiscreteAtoms.uniform([-1.0, 1.0])


SOURCES = {
    "gaussian": gaussian,
    "gmm2": gmm2,
    "bimodal1d": bimodal1d,
    "lattice2": lattice2,
    "binary": binary,
}

# grid spacing for the discrete sources
DELTAS = {"lattice2": LATTICE_DELTA, "binary": 2.0}


def get_source(name: str):
    try:
        return SOURCES[name]()
    except KeyError:
        raise ValueError(f"unknown source {name!r}; choose from {sorted(SOURCES)}") from None


def moments_of(source) -> GaussianSpec:
    return source if isinstance(source, GaussianSpec) else source.moments()


def oracle(source):
    """Exact conditional-expectation denoiser for a built-in source."""
    if isinstance(source, GaussianSpec):
        return GaussianDenoiser(source)
    return source.denoiser()


def sample(source, n: int, rng: np.random.Generator) -> np.ndarray:
    return source.sample(n, rng)
