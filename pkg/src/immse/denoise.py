"""Denoisers x_hat(z, gamma): analytic oracles, wrappers and ensembles.

Every denoiser is a callable ``denoiser(z, gamma) -> x_hat`` taking a batch
``z`` of shape ``(n, d)`` and either a scalar SNR or one SNR per row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .core_math import GaussianSpec


class Denoiser(Protocol):
    def __call__(self, z: np.ndarray, gamma) -> np.ndarray: ...


def _snr_column(gamma, n: int) -> np.ndarray:
    """SNR as an (n, 1) or (1, 1) column for broadcasting against (n, d)."""
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 0:
        return g.reshape(1, 1)
    if g.shape != (n,):
        raise ValueError(f"expected {n} SNR values, got shape {g.shape}")
    return g[:, None]


def _mixture_posterior_mean(z, gamma, log_w, means, variances):
    """E[x | z] for x ~ sum_k w_k N(m_k, diag v_k) observed through the channel.

    Components with v_k = 0 are point masses. Shapes: z (n, d), means and
    variances (K, d).
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    g = _snr_column(gamma, z.shape[0])[:, :, None]  # (n or 1, 1, 1)
    sg = np.sqrt(g)
    zk = z[:, None, :]
    var = g * variances[None] + 1.0  # predictive variance of z per component
    loglik = -0.5 * np.sum((zk - sg * means[None]) ** 2 / var + np.log(2 * np.pi * var), axis=2)
    logr = log_w[None, :] + loglik
    r = np.exp(logr - logsumexp(logr, axis=1, keepdims=True))
    e = (sg * variances[None] * zk + means[None]) / var
    return np.einsum("nk,nkd->nd", r, e)


def _mixture_log_marginal(z, gamma, log_w, means, variances):
    z = np.atleast_2d(np.asarray(z, dtype=float))
    var = gamma * variances[None] + 1.0
    ll = -0.5 * np.sum((z[:, None, :] - np.sqrt(gamma) * means[None]) ** 2 / var + np.log(2 * np.pi * var), axis=2)
    return logsumexp(log_w[None, :] + ll, axis=1)


@dataclass(frozen=True)
class DiagonalGmm:
    """Mixture of axis-aligned Gaussians."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if m.ndim == 1:
            m = m[:, None]
        if v.ndim == 1:
            v = v[:, None]
        v = np.broadcast_to(v, m.shape).copy()
        if w.shape != (m.shape[0],):
            raise ValueError("one weight per component required")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def moments(self) -> GaussianSpec:
        mu = self.weights @ self.means
        second = np.einsum("k,ki,kj->ij", self.weights, self.means, self.means)
        second += np.diag(self.weights @ self.variances)
        return GaussianSpec.from_covariance(mu, second - np.outer(mu, mu))

    def log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ll = -0.5 * np.sum(
            (x[:, None, :] - self.means[None]) ** 2 / self.variances[None] + np.log(2 * np.pi * self.variances[None]),
            axis=2,
        )
        return logsumexp(np.log(self.weights)[None] + ll, axis=1)

    def log_marginal(self, z, gamma: float) -> np.ndarray:
        """log p(z) for z = sqrt(gamma) x + eps."""
        return _mixture_log_marginal(z, gamma, np.log(self.weights), self.means, self.variances)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        k = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[k] + np.sqrt(self.variances[k]) * rng.standard_normal((n, self.dim))

    def denoiser(self) -> "GmmDenoiser":
        return GmmDenoiser(self)


@dataclass(frozen=True)
class DiscreteAtoms:
    """Finite distribution over distinct points."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (a.shape[0],):
            raise ValueError("one probability per atom required")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probabilities must be positive and sum to 1")
        if len(np.unique(a, axis=0)) != len(a):
            raise ValueError("atoms must be distinct")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteAtoms":
        a = np.asarray(atoms, dtype=float)
        return cls(a, np.full(len(a), 1.0 / len(a)))

    @classmethod
    def lattice(cls, grid, d: int, probs=None) -> "DiscreteAtoms":
        """Product grid ``grid^d``; uniform unless ``probs`` is given."""
        g = np.asarray(grid, dtype=float)
        pts = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
        if probs is None:
            return cls.uniform(pts)
        return cls(pts, probs)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def entropy(self) -> float:
        return float(-np.sum(self.probs * np.log(self.probs)))

    def moments(self) -> GaussianSpec:
        mu = self.probs @ self.atoms
        c = self.atoms - mu
        return GaussianSpec.from_covariance(mu, np.einsum("k,ki,kj->ij", self.probs, c, c))

    def log_marginal(self, z, gamma: float) -> np.ndarray:
        return _mixture_log_marginal(z, gamma, np.log(self.probs), self.atoms, np.zeros_like(self.atoms))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.atoms[rng.choice(len(self.probs), size=n, p=self.probs)]

    def denoiser(self) -> "DiscreteDenoiser":
        return DiscreteDenoiser(self)


class GaussianDenoiser:
    """Linear MMSE decoder mu + sqrt(g) U diag(1/(g + 1/lam)) U^T (z - sqrt(g) mu)."""

    def __init__(self, spec: GaussianSpec):
        self.spec = spec

    def __call__(self, z, gamma):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        g = _snr_column(gamma, z.shape[0])
        sp = self.spec
        y = (z - np.sqrt(g) * sp.mean) @ sp.eigvecs
        y = y * (np.sqrt(g) / (g + 1.0 / sp.eigvals))
        return sp.mean + y @ sp.eigvecs.T


class GmmDenoiser:
    def __init__(self, gmm: DiagonalGmm):
        self.gmm = gmm
        self._log_w = np.log(gmm.weights)

    def __call__(self, z, gamma):
        return _mixture_posterior_mean(z, gamma, self._log_w, self.gmm.means, self.gmm.variances)


class DiscreteDenoiser:
    def __init__(self, atoms: DiscreteAtoms):
        self.source = atoms
        self._log_p = np.log(atoms.probs)
        self._zero = np.zeros_like(atoms.atoms)

    def __call__(self, z, gamma):
        return _mixture_posterior_mean(z, gamma, self._log_p, self.source.atoms, self._zero)


def gaussian_denoiser(spec: GaussianSpec) -> GaussianDenoiser:
    return GaussianDenoiser(spec)


def gmm_denoiser(gmm: DiagonalGmm) -> GmmDenoiser:
    return GmmDenoiser(gmm)


def discrete_denoiser(atoms: DiscreteAtoms) -> DiscreteDenoiser:
    return DiscreteDenoiser(atoms)


def soft_discretize(xhat, gamma, grid) -> np.ndarray:
    """Pull each coordinate toward the grid with a softmax of temperature 1 + gamma.

    ``grid`` is one 1-D array shared by all coordinates, or a sequence with one
    array per coordinate.
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    g = _snr_column(gamma, xhat.shape[0])
    grids = _per_dim_grids(grid, xhat.shape[1])
    out = np.empty_like(xhat)
    for i, gi in enumerate(grids):
        logits = -0.5 * (xhat[:, i : i + 1] - gi[None, :]) ** 2 * (1.0 + g)
        out[:, i] = softmax(logits, axis=1) @ gi
    return out


def _per_dim_grids(grid, d: int) -> list[np.ndarray]:
    try:
        arr = np.asarray(grid, dtype=float)
    except ValueError:
        arr = None  # ragged: one grid per dimension
    if arr is not None and arr.ndim == 1:
        if arr.size == 0:
            raise ValueError("empty grid")
        return [arr] * d
    grids = [np.asarray(gi, dtype=float) for gi in grid]
    if len(grids) != d or any(gi.ndim != 1 or gi.size == 0 for gi in grids):
        raise ValueError("need one nonempty grid per dimension")
    return grids


class SoftDiscretized:
    """Apply :func:`soft_discretize` to the output of another denoiser."""

    def __init__(self, denoiser: Denoiser, grid):
        self.denoiser = denoiser
        self.grid = grid

    def __call__(self, z, gamma):
        return soft_discretize(self.denoiser(z, gamma), gamma, self.grid)


class GaussianFallback:
    """Use ``denoiser`` inside [gamma0, gamma1] and the matched Gaussian oracle outside."""

    def __init__(self, denoiser: Denoiser, spec: GaussianSpec, gamma0: float, gamma1: float):
        if not 0 < gamma0 < gamma1:
            raise ValueError("need 0 < gamma0 < gamma1")
        self.denoiser = denoiser
        self.gaussian = GaussianDenoiser(spec)
        self.gamma0 = gamma0
        self.gamma1 = gamma1

    def __call__(self, z, gamma):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        g = np.asarray(gamma, dtype=float)
        inside = (g >= self.gamma0) & (g <= self.gamma1)
        if g.ndim == 0:
            return self.denoiser(z, gamma) if inside else self.gaussian(z, gamma)
        out = np.empty_like(z)
        if inside.any():
            out[inside] = self.denoiser(z[inside], g[inside])
        if (~inside).any():
            out[~inside] = self.gaussian(z[~inside], g[~inside])
        return out


def gaussian_fallback(denoiser: Denoiser, spec: GaussianSpec, gamma0: float, gamma1: float) -> GaussianFallback:
    return GaussianFallback(denoiser, spec, gamma0, gamma1)


@dataclass
class EnsembleSpec:
    """Piecewise-constant choice of member over log-SNR.

    Member ``owners[j]`` serves alpha in [breakpoints[j-1], breakpoints[j]),
    with the first and last intervals extending to -inf and +inf.
    """

    members: Sequence[Denoiser]
    breakpoints: np.ndarray
    owners: list[int]
    alphas: np.ndarray = field(repr=False, default=None)
    winners: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        if len(self.owners) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more owner than breakpoints")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    def member_index(self, alpha) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, np.asarray(alpha, dtype=float), side="right")
        return np.asarray(self.owners)[idx]

    def __call__(self, z, gamma):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        g = np.asarray(gamma, dtype=float)
        who = self.member_index(np.log(g))
        if g.ndim == 0:
            return self.members[int(who)](z, gamma)
        out = np.empty_like(z)
        for m in np.unique(who):
            sel = who == m
            out[sel] = self.members[int(m)](z[sel], g[sel])
        return out


def build_ensemble(members: Sequence[Denoiser], curves: Sequence) -> EnsembleSpec:
    """Assign each validation log-SNR to the member with the lowest MSE there.

    Ties go to the lowest member index. Breakpoints sit halfway between the
    grid points where the winner changes, so every grid alpha maps to its own
    winner even after a gamma round trip.
    """
    if len(members) != len(curves) or not members:
        raise ValueError("need one validation curve per member")
    alphas = np.asarray(curves[0].alphas)
    for c in curves[1:]:
        if c.alphas.shape != alphas.shape or np.any(c.alphas != alphas):
            raise ValueError("all curves must share the same alpha grid")
    mse = np.stack([np.asarray(c.mse_eps) for c in curves])
    winners = np.argmin(mse, axis=0)
    change = np.flatnonzero(np.diff(winners)) + 1
    owners = [int(winners[0])] + [int(winners[i]) for i in change]
    return EnsembleSpec(list(members), 0.5 * (alphas[change - 1] + alphas[change]), owners, alphas=alphas, winners=winners)
