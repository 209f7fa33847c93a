"""Likelihood bounds from denoising error curves.

The continuous bound integrates the gap between the matched-Gaussian noise
prediction error ``f_sigma`` and the denoiser's noise prediction error over
log-SNR; the discrete bound integrates the denoiser's error over a finite SNR
window and adds analytic tail constants. Both integrals are importance
sampled with a truncated logistic over log-SNR.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core_math import (
    LN2,
    GaussianSpec,
    LogisticSampler,
    covering_sampler,
    estimate_moments,
    f_sigma,
    make_rng,
    moment_matched_sampler,
)
from .denoise import Denoiser, DiagonalGmm, DiscreteAtoms, GaussianDenoiser

NOISE_STREAM = 1
ALPHA_STREAM = 0
MAX_ROWS = 1 << 20


def _as_data(dataset) -> np.ndarray:
    X = np.asarray(dataset, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"dataset must be a nonempty (n, d) array, got shape {X.shape}")
    return X


@dataclass
class MseCurve:
    """Per log-SNR denoising errors.

    ``mse_eps`` is the noise-space error E||eps - eps_hat||^2, ``mse_x`` the
    data-space error E||x - x_hat||^2 = mse_eps / gamma. ``var_eps`` is the
    per-sample variance of the noise-space error at each alpha and ``q`` the
    importance density the alphas were drawn from (if any). ``point_eps`` has
    shape (n_alpha, n_data): noise-space error per data point, averaged over
    its noise draws.
    """

    alphas: np.ndarray
    mse_eps: np.ndarray
    mse_x: np.ndarray
    var_eps: np.ndarray
    counts: np.ndarray
    q: np.ndarray | None = None
    values: np.ndarray | None = field(default=None, repr=False)
    point_eps: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        if np.any(np.diff(self.alphas) <= 0):
            raise ValueError("alphas must be strictly increasing")
        if np.any(np.asarray(self.counts) < 1):
            raise ValueError("every alpha needs at least one sample")

    def __len__(self) -> int:
        return len(self.alphas)

    @property
    def gammas(self) -> np.ndarray:
        return np.exp(self.alphas)

    def subset(self, idx) -> "MseCurve":
        idx = np.sort(np.asarray(idx))
        pick = lambda a: None if a is None else np.asarray(a)[idx]  # noqa: E731
        return MseCurve(
            self.alphas[idx], self.mse_eps[idx], self.mse_x[idx], self.var_eps[idx],
            self.counts[idx], pick(self.q), pick(self.values), pick(self.point_eps),
        )

    def to_csv(self, path, eigvals) -> None:
        """Write ``alpha,mse_eps,mse_x,mmse_gauss,n`` rows."""
        mmse_g = np.array([mmse_gaussian_eigvals(eigvals, g) for g in self.gammas])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "mse_eps", "mse_x", "mmse_gauss", "n"])
            for row in zip(self.alphas, self.mse_eps, self.mse_x, mmse_g, self.counts):
                w.writerow([repr(float(v)) for v in row[:4]] + [int(row[4])])


@dataclass
class NllEstimate:
    kind: str
    nats: float
    bpd: float
    std_error_nats: float
    n_alpha: int
    n_data: int
    n_eps: int
    gamma0: float | None = None
    gamma1: float | None = None
    tail_constant: float | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise ValueError(f"unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True)


@dataclass(frozen=True)
class TailConstants:
    gamma0: float
    gamma1: float
    delta: float
    j_max: int
    left: float
    right: float

    @property
    def total(self) -> float:
        return self.left + self.right


def _errors_at(denoiser, X, gamma, n_eps, rng, keep):
    """Denoising errors at one SNR over every data point, ``n_eps`` noise draws each.

    Returns noise-space mean, data-space mean, per-draw noise-space variance,
    number of draws, per-point noise-space means and (optionally) all draws.
    """
    n, d = X.shape
    sg = np.sqrt(gamma)
    per_point = np.empty(n)
    sx = s2 = 0.0
    kept = [] if keep else None
    step = max(1, MAX_ROWS // max(d * n_eps, 1))
    for start in range(0, n, step):
        stop = min(n, start + step)
        x = np.repeat(X[start:stop], n_eps, axis=0)
        eps = rng.standard_normal(x.shape)
        xhat = denoiser(sg * x + eps, gamma)
        ex = np.sum((x - xhat) ** 2, axis=1)
        ee = gamma * ex
        per_point[start:stop] = ee.reshape(-1, n_eps).mean(axis=1)
        s2 += np.sum(ee * ee)
        sx += ex.sum()
        if keep:
            kept.append(ee)
    total = n * n_eps
    mean = float(per_point.mean())
    var = max(s2 / total - mean * mean, 0.0) * total / max(total - 1, 1)
    return mean, sx / total, var, total, per_point, (np.concatenate(kept) if keep else None)


def mse_curve(
    denoiser: Denoiser,
    dataset,
    alphas,
    n_eps: int = 1,
    seed: int = 0,
    q=None,
    keep_values: bool = False,
    threads: int = 1,
) -> MseCurve:
    """Monte Carlo denoising error at each log-SNR in ``alphas``.

    Each alpha gets its own noise stream keyed by ``(seed, index)`` so results
    do not depend on ``threads``. Per-point means (averaged over the noise
    draws) are always stored in ``point_eps``; ``keep_values`` also keeps
    every individual draw.
    """
    X = _as_data(dataset)
    alphas = np.asarray(alphas, dtype=float)
    if n_eps < 1:
        raise ValueError("n_eps must be >= 1")

    def one(k):
        return _errors_at(denoiser, X, float(np.exp(alphas[k])), n_eps, make_rng(seed, NOISE_STREAM, k), keep_values)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(one, range(len(alphas))))
    else:
        res = [one(k) for k in range(len(alphas))]
    if not res:
        raise ValueError("need at least one alpha")
    mse_eps, mse_x, var, counts, points, vals = zip(*res)
    return MseCurve(
        alphas, np.array(mse_eps), np.array(mse_x), np.array(var), np.array(counts, dtype=int),
        None if q is None else np.asarray(q, dtype=float),
        np.stack(vals) if keep_values else None,
        np.stack(points),
    )


def pointwise_mse(denoiser: Denoiser, x, gamma: float, n_eps: int, noise_source: np.random.Generator):
    """Monte Carlo E_{z|x} ||x - x_hat(z, gamma)||^2 for a single point ``x``."""
    if n_eps < 1:
        raise ValueError("n_eps must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    eps = noise_source.standard_normal((n_eps, x.shape[0]))
    xhat = denoiser(np.sqrt(gamma) * x + eps, gamma)
    vals = np.sum((x - xhat) ** 2, axis=1)
    return float(vals.mean()), vals


def mmse_gaussian_eigvals(eigvals, gamma) -> float:
    return float(np.sum(1.0 / (1.0 / np.asarray(eigvals, dtype=float) + gamma)))


def mmse_gaussian(spec: GaussianSpec, gamma: float) -> float:
    """Closed-form MMSE sum_i 1 / (1/lambda_i + gamma)."""
    return mmse_gaussian_eigvals(spec.eigvals, gamma)


def _draw_alphas(sampler: LogisticSampler, n_alpha: int, seed: int, stratified: bool):
    if n_alpha < 1:
        raise ValueError("n_alpha must be >= 1")
    alpha, q = sampler.draw(n_alpha, make_rng(seed, ALPHA_STREAM), stratified=stratified)
    order = np.argsort(alpha)
    return alpha[order], q[order]


def _importance_mean(h, counts, per_sample_var, stratified=False):
    """Mean of an (alpha x data point) integrand table and its standard error.

    The same data points are reused at every alpha and vice versa, so the
    error combines the spread of the per-alpha means over the number of
    alphas with the spread of the per-point means over the number of points.
    For stratified alphas (one per equal-probability stratum, in sorted
    order) the alpha term uses successive differences instead. A single row
    or column falls back to the within-cell noise variance.
    """
    K, n = h.shape
    mean = float(h.mean())
    var = 0.0
    g = h.mean(axis=1)
    if K > 1 and stratified:
        var += float(np.sum(np.diff(g) ** 2)) / (2.0 * (K - 1) * K)
    elif K > 1:
        var += float(np.var(g, ddof=1)) / K
    if n > 1:
        var += float(np.var(h.mean(axis=0), ddof=1)) / n
    if K == 1 or n == 1:
        var += float(np.mean(per_sample_var)) / float(np.sum(counts))
    return mean, float(np.sqrt(var))


def _point_table(curve: MseCurve) -> np.ndarray:
    return curve.mse_eps[:, None] if curve.point_eps is None else curve.point_eps


def _check_finite(g, alphas):
    bad = ~np.isfinite(g)
    if bad.any():
        raise FloatingPointError(f"non-finite integrand at alpha = {alphas[bad][:5].tolist()}")


def continuous_from_curve(
    curve: MseCurve, spec: GaussianSpec, n_data: int = 1, n_eps: int = 1, stratified: bool = False
) -> NllEstimate:
    """0.5 log det(2 pi e Sigma) - 0.5 E_q[(f_sigma - mse_eps) / q]."""
    if curve.q is None:
        raise ValueError("curve has no importance densities")
    f = f_sigma(curve.alphas, spec.eigvals)
    _check_finite((f - curve.mse_eps) / curve.q, curve.alphas)
    h = (f[:, None] - _point_table(curve)) / curve.q[:, None]
    mean, se = _importance_mean(h, curve.counts, curve.var_eps / curve.q**2, stratified)
    nats = spec.entropy() - 0.5 * mean
    return NllEstimate("continuous", nats, nats / (spec.dim * LN2), 0.5 * se, len(curve), n_data, n_eps)


def discrete_from_curve(
    curve: MseCurve, d: int, tails: TailConstants, n_data: int = 1, n_eps: int = 1, stratified: bool = False
) -> NllEstimate:
    """0.5 E_q[1{alpha in window} mse_eps / q] + c(gamma0, gamma1)."""
    if curve.q is None:
        raise ValueError("curve has no importance densities")
    a0, a1 = np.log(tails.gamma0), np.log(tails.gamma1)
    inside = (curve.alphas >= a0) & (curve.alphas <= a1)
    _check_finite(np.where(inside, curve.mse_eps / curve.q, 0.0), curve.alphas)
    h = np.where(inside[:, None], _point_table(curve) / curve.q[:, None], 0.0)
    mean, se = _importance_mean(h, curve.counts, np.where(inside, curve.var_eps / curve.q**2, 0.0), stratified)
    nats = 0.5 * mean + tails.total
    return NllEstimate(
        "discrete", nats, nats / (d * LN2), 0.5 * se, len(curve), n_data, n_eps,
        tails.gamma0, tails.gamma1, tails.total,
    )


def nll_continuous(
    denoiser: Denoiser,
    dataset,
    spec: GaussianSpec | None = None,
    sampler: LogisticSampler | None = None,
    n_alpha: int = 100,
    n_eps: int = 1,
    seed: int = 0,
    stratified: bool = False,
    threads: int = 1,
    return_curve: bool = False,
):
    """Upper bound on E[-log p(x)] in nats from the denoiser's error curve.

    ``spec`` defaults to the data's own moments and ``sampler`` to the
    moment-matched logistic. Outside the sampler's support the integrand is
    taken as zero, which is exact when the denoiser falls back to the matched
    Gaussian oracle there.
    """
    X = _as_data(dataset)
    spec = estimate_moments(X) if spec is None else spec
    sampler = moment_matched_sampler(spec.eigvals) if sampler is None else sampler
    alphas, q = _draw_alphas(sampler, n_alpha, seed, stratified)
    curve = mse_curve(denoiser, X, alphas, n_eps, seed, q=q, threads=threads, keep_values=False)
    est = continuous_from_curve(curve, spec, X.shape[0], n_eps, stratified)
    return (est, curve) if return_curve else est


def nll_pointwise(
    denoiser: Denoiser,
    x,
    spec: GaussianSpec,
    sampler: LogisticSampler | None = None,
    n_alpha: int = 100,
    n_eps: int = 1000,
    seed: int = 0,
    stratified: bool = False,
) -> float:
    """Importance-sampled estimate of -log p(x) at a single point."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != 1:
        raise ValueError("nll_pointwise takes a single point")
    return nll_continuous(denoiser, x, spec, sampler, n_alpha, n_eps, seed, stratified).nats


def tail_constants(gamma0: float, gamma1: float, delta: float, eigvals, d: int | None = None, j_max: int = 8) -> TailConstants:
    """Analytic bounds on the MMSE integral below gamma0 and above gamma1.

    left = 0.5 sum_i log(1 + gamma0 lambda_i),
    right = 4 d sum_{j=1..j_max} exp(-(j - 1/2)^2 delta^2 gamma1 / 2).
    """
    if not 0 < gamma0 < gamma1:
        raise ValueError("need 0 < gamma0 < gamma1")
    if delta <= 0 or j_max < 1:
        raise ValueError("need delta > 0 and j_max >= 1")
    lam = np.asarray(eigvals, dtype=float)
    d = len(lam) if d is None else int(d)
    left = 0.5 * float(np.sum(np.log1p(gamma0 * lam)))
    j = np.arange(1, j_max + 1)
    right = 4.0 * d * float(np.sum(np.exp(-((j - 0.5) ** 2) * delta**2 * gamma1 / 2.0)))
    return TailConstants(float(gamma0), float(gamma1), float(delta), int(j_max), left, right)


def nll_discrete(
    denoiser: Denoiser,
    dataset,
    delta: float,
    eigvals=None,
    gamma0: float = 1e-4,
    gamma1: float = 1e6,
    sampler: LogisticSampler | None = None,
    n_alpha: int = 1000,
    n_eps: int = 1,
    seed: int = 0,
    j_max: int = 8,
    stratified: bool = False,
    threads: int = 1,
    return_curve: bool = False,
):
    """Upper bound on E[-log P(x)] for data on a grid of spacing ``delta``."""
    X = _as_data(dataset)
    lam = estimate_moments(X).eigvals if eigvals is None else np.asarray(eigvals, dtype=float)
    a0, a1 = float(np.log(gamma0)), float(np.log(gamma1))
    sampler = covering_sampler(lam, a0, a1) if sampler is None else sampler
    lo, hi = sampler.support
    if lo > a0 + 1e-9 or hi < a1 - 1e-9:
        raise ValueError(f"sampler support [{lo:.4g}, {hi:.4g}] does not cover [{a0:.4g}, {a1:.4g}]")
    tails = tail_constants(gamma0, gamma1, delta, lam, X.shape[1], j_max)
    alphas, q = _draw_alphas(sampler, n_alpha, seed, stratified)
    curve = mse_curve(denoiser, X, alphas, n_eps, seed, q=q, threads=threads)
    est = discrete_from_curve(curve, X.shape[1], tails, X.shape[0], n_eps, stratified)
    return (est, curve) if return_curve else est


def dequantize(dataset, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Add U[-delta/2, delta/2) noise so each bin is filled uniformly around its atom."""
    X = _as_data(dataset)
    return X + rng.uniform(-0.5 * delta, 0.5 * delta, size=X.shape)


def convert_density(nll: NllEstimate, delta: float, d: int, direction: str) -> NllEstimate:
    """Switch between discrete (per-bin) and continuous (per-volume) NLL.

    A bin of volume delta^d holding mass P has density P / delta^d, so
    ``"discrete->continuous"`` adds d log(delta) and ``"continuous->discrete"``
    subtracts it. The latter bounds the discrete NLL when the continuous
    estimate was made on dequantized data.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    shift = d * np.log(delta)
    if direction == "discrete->continuous":
        if nll.kind != "discrete":
            raise ValueError("expected a discrete estimate")
        kind, nats = "continuous", nll.nats + shift
    elif direction == "continuous->discrete":
        if nll.kind != "continuous":
            raise ValueError("expected a continuous estimate")
        kind, nats = "discrete", nll.nats - shift
    else:
        raise ValueError(f"unknown direction {direction!r}")
    out = NllEstimate(**{**nll.to_dict(), "kind": kind, "nats": float(nats)})
    out.bpd = out.nats / (d * LN2)
    return out


def _source_denoiser(source):
    if isinstance(source, GaussianSpec):
        return GaussianDenoiser(source)
    if isinstance(source, (DiagonalGmm, DiscreteAtoms)):
        return source.denoiser()
    raise TypeError(f"no analytic oracle for {type(source).__name__}")


@dataclass(frozen=True)
class ImmseCheck:
    lhs: float
    rhs: float
    rel_error: float
    lhs_se: float
    rhs_se: float


def pointwise_kl(source, x, gamma: float, eps: np.ndarray) -> np.ndarray:
    """Per-draw log p(z|x) - log p(z) at z = sqrt(gamma) x + eps."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.sqrt(gamma) * x + eps
    log_cond = -0.5 * np.sum(eps**2 + np.log(2 * np.pi), axis=1)
    return log_cond - source.log_marginal(z, gamma)


def verify_pointwise_immse(source, x, gamma: float, dgamma: float = 1e-3, n: int = 1_000_000, seed: int = 0) -> ImmseCheck:
    """Compare d/dgamma KL(p(z|x) || p(z)) with half the pointwise MMSE.

    The derivative is a central difference with common noise draws at
    gamma +/- dgamma; the MMSE uses the source's exact posterior mean.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    eps = make_rng(seed, 2).standard_normal((n, x.shape[0]))
    diff = (pointwise_kl(source, x, gamma + dgamma, eps) - pointwise_kl(source, x, gamma - dgamma, eps)) / (2 * dgamma)
    xhat = _source_denoiser(source)(np.sqrt(gamma) * x + eps, gamma)
    half = 0.5 * np.sum((x - xhat) ** 2, axis=1)
    lhs, rhs = float(diff.mean()), float(half.mean())
    return ImmseCheck(lhs, rhs, abs(lhs - rhs) / abs(rhs), float(diff.std(ddof=1) / np.sqrt(n)), float(half.std(ddof=1) / np.sqrt(n)))


@dataclass(frozen=True)
class HighSnrCheck:
    f_value: float
    log_ratio: float
    abs_error: float
    f_se: float


def verify_high_snr_limit(source, gauss_base: GaussianSpec, x, gamma_large: float, n: int = 1_000_000, seed: int = 0) -> HighSnrCheck:
    """KL(p(z|x) || p_G(z)) - KL(p(z|x) || p(z)) at large SNR against log p(x)/p_G(x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    eps = make_rng(seed, 3).standard_normal((n, x.shape[0]))
    z = np.sqrt(gamma_large) * x + eps
    vals = source.log_marginal(z, gamma_large) - gauss_base.log_marginal(z, gamma_large)
    f = float(vals.mean())
    ratio = float(source.log_density(x[None])[0] - gauss_base.log_density(x[None])[0])
    return HighSnrCheck(f, ratio, abs(f - ratio), float(vals.std(ddof=1) / np.sqrt(n)))


@dataclass(frozen=True)
class GapCheck:
    lhs_mse: float
    mmse_term: float
    gap_term: float
    residual: float
    residual_se: float
    gap_se: float


def estimation_gap_check(oracle: Denoiser, candidate: Denoiser, dataset, gamma: float, n_eps: int = 1, seed: int = 0) -> GapCheck:
    """E||x - x_hat||^2 = mmse + E||x_hat* - x_hat||^2 on shared samples."""
    X = _as_data(dataset)
    x = np.repeat(X, n_eps, axis=0)
    eps = make_rng(seed, 4).standard_normal(x.shape)
    z = np.sqrt(gamma) * x + eps
    xs = oracle(z, gamma)
    xc = candidate(z, gamma)
    lhs = np.sum((x - xc) ** 2, axis=1)
    mm = np.sum((x - xs) ** 2, axis=1)
    gap = np.sum((xs - xc) ** 2, axis=1)
    res = lhs - mm - gap
    n = len(res)
    return GapCheck(
        float(lhs.mean()), float(mm.mean()), float(gap.mean()), float(res.mean()),
        float(res.std(ddof=1) / np.sqrt(n)), float(gap.std(ddof=1) / np.sqrt(n)),
    )


def variational_diffusion_loss(denoiser: Denoiser, dataset, gamma_grid, n_eps: int = 1, seed: int = 0) -> float:
    """Diffusion term of the discrete-time variational bound, in nats.

    sum_t 0.5 (gamma_{t-1} - gamma_t) E||x - x_hat(z_{gamma_t}, gamma_t)||^2, with
    each step's error taken at its lower SNR. Prior and reconstruction terms
    are not included.
    """
    X = _as_data(dataset)
    g = np.asarray(gamma_grid, dtype=float)
    if g.ndim != 1 or len(g) < 2:
        raise ValueError("need at least two SNR values")
    dg = np.diff(g)
    if not (np.all(dg > 0) or np.all(dg < 0)):
        raise ValueError("SNR grid must be strictly ordered")
    g = np.sort(g)
    curve = mse_curve(denoiser, X, np.log(g[:-1]), n_eps, seed)
    return float(0.5 * np.sum(np.diff(g) * curve.mse_x))
