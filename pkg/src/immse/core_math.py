"""Shared numerics: moments, eigendecomposition, the Gaussian reference curve
and the truncated-logistic importance distribution over log-SNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

EIG_FLOOR = 1e-12
LN2 = float(np.log(2.0))


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator; distinct ``stream`` keys give independent streams."""
    key = [int(seed)] + [int(k) for k in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian base measure N(mean, U diag(eigvals) U^T)."""

    mean: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        lam = np.atleast_1d(np.asarray(self.eigvals, dtype=float))
        U = np.atleast_2d(np.asarray(self.eigvecs, dtype=float))
        d = mean.shape[0]
        if lam.shape != (d,) or U.shape != (d, d):
            raise ValueError(f"inconsistent shapes: mean {mean.shape}, eigvals {lam.shape}, eigvecs {U.shape}")
        if np.any(lam <= 0):
            raise ValueError("eigenvalues must be positive")
        if np.max(np.abs(U.T @ U - np.eye(d))) > 1e-8:
            raise ValueError("eigenvectors are not orthonormal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigvals", lam)
        object.__setattr__(self, "eigvecs", U)

    @classmethod
    def isotropic(cls, d: int = 1, var: float = 1.0, mean=None) -> "GaussianSpec":
        mean = np.zeros(d) if mean is None else mean
        return cls(mean, np.full(d, float(var)), np.eye(d))

    @classmethod
    def from_covariance(cls, mean, cov) -> "GaussianSpec":
        lam, U = np.linalg.eigh(np.atleast_2d(cov))
        return cls(mean, np.maximum(lam, EIG_FLOOR), U)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T

    def entropy(self) -> float:
        """Differential entropy 0.5 log det(2 pi e Sigma) in nats."""
        return 0.5 * float(np.sum(np.log(2 * np.pi * np.e * self.eigvals)))

    def log_density(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        y = (x - self.mean) @ self.eigvecs
        return -0.5 * np.sum(y**2 / self.eigvals + np.log(2 * np.pi * self.eigvals), axis=1)

    def log_marginal(self, z, gamma: float) -> np.ndarray:
        """log p_G(z) for z = sqrt(gamma) x + eps, x ~ this Gaussian."""
        z = np.atleast_2d(z)
        y = (z - np.sqrt(gamma) * self.mean) @ self.eigvecs
        var = gamma * self.eigvals + 1.0
        return -0.5 * np.sum(y**2 / var + np.log(2 * np.pi * var), axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        w = rng.standard_normal((n, self.dim)) * np.sqrt(self.eigvals)
        return self.mean + w @ self.eigvecs.T


def jacobi_eigendecomposition(S, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(eigvals, eigvecs)`` sorted ascending with ``S = U diag(lam) U^T``.
    """
    A = np.array(S, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny) if A.size else 1.0
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-8 * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    thresh = tol * scale
    for _ in range(max_sweeps):
        off = np.abs(A - np.diag(np.diag(A)))
        if off.max(initial=0.0) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 0.01 * thresh:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    lam = np.diag(A).copy()
    order = np.argsort(lam)
    return lam[order], V[:, order]


def estimate_moments(dataset, method: str = "eigh") -> GaussianSpec:
    """Sample mean and (N-1)-normalised covariance eigendecomposition.

    ``method="jacobi"`` routes through :func:`jacobi_eigendecomposition`;
    the default uses LAPACK, which scales to larger ``d``.
    """
    try:
        X = np.asarray(dataset, dtype=float)
    except ValueError as exc:
        raise ValueError("ragged dataset") from exc
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise ValueError(f"need at least 2 samples of equal length, got shape {X.shape}")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    if method == "jacobi":
        lam, U = jacobi_eigendecomposition(cov)
    elif method == "eigh":
        lam, U = np.linalg.eigh(cov)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GaussianSpec(mean, np.maximum(lam, EIG_FLOOR), U)


def f_sigma(alpha, eigvals) -> np.ndarray:
    """Gaussian reference curve sum_i sigmoid(alpha + log lambda_i).

    This is the noise-prediction MSE of the optimal denoiser for a Gaussian
    with covariance eigenvalues ``eigvals`` at log-SNR ``alpha``.
    """
    a = np.asarray(alpha, dtype=float)
    loglam = np.log(np.asarray(eigvals, dtype=float))
    return expit(a[..., None] + loglam).sum(axis=-1)


@dataclass(frozen=True)
class LogisticSampler:
    """Logistic(mu, s) restricted to the quantile band [t0, t1]."""

    mu: float
    s: float
    t0: float
    t1: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("scale must be positive")
        if not 0.0 < self.t0 < self.t1 < 1.0:
            raise ValueError(f"need 0 < t0 < t1 < 1, got {self.t0}, {self.t1}")

    @classmethod
    def from_range(cls, mu: float, s: float, alpha0: float, alpha1: float) -> "LogisticSampler":
        """Truncation chosen so the support is exactly [alpha0, alpha1]."""
        return cls(float(mu), float(s), float(expit((alpha0 - mu) / s)), float(expit((alpha1 - mu) / s)))

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.quantile(self.t0)), float(self.quantile(self.t1)))

    def quantile(self, u):
        return self.mu + self.s * logit(u)

    def pdf(self, alpha):
        """Truncated density; zero outside the support."""
        a = np.asarray(alpha, dtype=float)
        y = (a - self.mu) / self.s
        p = expit(y) * expit(-y) / self.s / (self.t1 - self.t0)
        lo, hi = self.support
        return np.where((a >= lo - 1e-12) & (a <= hi + 1e-12), p, 0.0)

    def mean_var(self) -> tuple[float, float]:
        """Mean and variance of the truncated distribution (numerical)."""
        from scipy.integrate import quad

        lo, hi = self.support
        m = quad(lambda a: a * self.pdf(a), lo, hi, epsabs=1e-12)[0]
        v = quad(lambda a: (a - m) ** 2 * self.pdf(a), lo, hi, epsabs=1e-12)[0]
        return m, v

    def draw(self, n: int, rng: np.random.Generator, stratified: bool = False):
        """Draw ``n`` log-SNR values and their densities.

        With ``stratified=True`` one uniform is drawn per equal-probability
        stratum of [t0, t1]; each value is still marginally distributed as q.
        """
        if stratified:
            u01 = (np.arange(n) + rng.uniform(size=n)) / n
        else:
            u01 = rng.uniform(size=n)
        u = self.t0 + (self.t1 - self.t0) * u01
        return sample_alpha(self, u)


def moment_matched_sampler(eigvals, n_scales: float = 4.0) -> LogisticSampler:
    """Logistic fitted to the mixture of logistic CDFs making up ``f_sigma``.

    mu = mean_i(-log lambda_i), s = sqrt(1 + 3/pi^2 Var_i(log lambda_i))
    (population variance), truncated to [mu - n_scales*s, mu + n_scales*s].
    """
    loglam = np.log(np.asarray(eigvals, dtype=float))
    mu = float(np.mean(-loglam))
    s = float(np.sqrt(1.0 + 3.0 / np.pi**2 * np.var(loglam)))
    return LogisticSampler(mu, s, float(expit(-n_scales)), float(expit(n_scales)))


def covering_sampler(eigvals, alpha0: float, alpha1: float) -> LogisticSampler:
    """Moment-matched location/scale with support exactly [alpha0, alpha1]."""
    base = moment_matched_sampler(eigvals)
    return LogisticSampler.from_range(base.mu, base.s, alpha0, alpha1)


def sample_alpha(sampler: LogisticSampler, u):
    """Map quantile level(s) ``u`` in [t0, t1] to ``(alpha, q(alpha))``."""
    u = np.asarray(u, dtype=float)
    if np.any(u < sampler.t0) or np.any(u > sampler.t1):
        raise ValueError(f"u must lie in [{sampler.t0}, {sampler.t1}]")
    alpha = sampler.quantile(u)
    y = (alpha - sampler.mu) / sampler.s
    q = expit(y) * expit(-y) / sampler.s / (sampler.t1 - sampler.t0)
    return alpha, q


def nats_to_bpd(nats, d: int):
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return nats / (d * LN2)
