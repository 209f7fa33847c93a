"""Standard errors for NLL estimates.

Two views are offered: the plain CLT error of a batch of integrand values,
and a resampling check that re-runs an estimator on random subsets of a
fixed log-SNR set. Subsets are drawn without replacement, so this is a
subsampling scheme rather than a classical with-replacement bootstrap.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .core_math import make_rng
from .estimate import MseCurve, NllEstimate

BOOTSTRAP_STREAM = 5


def clt_std_error(values) -> float:
    """Sample standard deviation over sqrt(N)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise ValueError("need at least two values for a standard error")
    return float(np.std(v, ddof=1) / np.sqrt(v.size))


@dataclass(frozen=True)
class BootstrapReport:
    full_value: float
    subset_mean: float
    subset_std: float
    n_subsets: int
    subset_size: int
    values: tuple[float, ...] = ()

    def to_json(self, **extra) -> str:
        doc = asdict(self)
        doc["values"] = list(self.values)
        return json.dumps({**doc, **extra}, indent=2, sort_keys=True)


def _nats(result) -> float:
    return float(result.nats if isinstance(result, NllEstimate) else result)


def bootstrap_nll(
    curve: MseCurve,
    estimator: Callable[[MseCurve], NllEstimate | float],
    subset_size: int = 100,
    n_subsets: int = 10,
    seed: int = 0,
) -> BootstrapReport:
    """Spread of ``estimator`` over random log-SNR subsets of ``curve``.

    Parameters
    ----------
    curve : MseCurve
        Curve evaluated on the full log-SNR set, with importance densities.
    estimator : callable
        Maps a (sub)curve to an :class:`NllEstimate` or a value in nats,
        e.g. ``lambda c: continuous_from_curve(c, spec)``.
    subset_size, n_subsets : int
        Each subset holds ``subset_size`` distinct alphas.
    seed : int
        Subset selection is keyed by ``(seed, 5, i)`` for subset ``i``.
    """
    K = len(curve)
    if not 1 <= subset_size <= K:
        raise ValueError(f"subset_size {subset_size} needs between 1 and {K} stored alphas")
    if n_subsets < 1:
        raise ValueError("n_subsets must be >= 1")
    full = _nats(estimator(curve))
    vals = []
    for i in range(n_subsets):
        idx = make_rng(seed, BOOTSTRAP_STREAM, i).choice(K, size=subset_size, replace=False)
        vals.append(_nats(estimator(curve.subset(idx))))
    vals = np.array(vals)
    std = float(np.std(vals, ddof=1)) if n_subsets > 1 else 0.0
    return BootstrapReport(full, float(vals.mean()), std, n_subsets, subset_size, tuple(vals.tolist()))
