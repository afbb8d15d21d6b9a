"""Estimators for simulated traces and the inverse-Gaussian inter-delivery model."""

from __future__ import annotations

import csv
from typing import IO, Callable, Iterable

import numpy as np
from scipy.special import log_ndtr, ndtr

DEFAULT_BLOCK_LEN = 10_000


def batch_means(block_sums, mean_rate, block_len: int):
    """Batch-means temporal variance from per-block sums.

    ``block_sums`` has shape ``(K,)`` or ``(K, N)``; the estimate is
    ``mean_k ((S_k - L * mean_rate) / sqrt(L))**2``.
    """
    sums = np.asarray(block_sums, dtype=float)
    if sums.shape[0] == 0:
        raise ValueError("batch means needs at least one complete block")
    dev = (sums - block_len * np.asarray(mean_rate, dtype=float)) / np.sqrt(block_len)
    return np.mean(dev**2, axis=0)


def estimate_temporal_variance(series, mu_hat: float, block_len: int = DEFAULT_BLOCK_LEN) -> float:
    """Batch-means estimate of the temporal variance of a 0/1 delivery series.

    The series is cut into ``K = len(series) // block_len`` blocks; a trailing
    partial block is dropped.
    """
    z = np.asarray(series, dtype=float).reshape(-1)
    if block_len < 1:
        raise ValueError("block_len must be positive")
    if z.size < 10 * block_len:
        raise ValueError(
            f"series of length {z.size} is too short for block length {block_len} "
            "(need at least 10 blocks)"
        )
    k = z.size // block_len
    sums = z[: k * block_len].reshape(k, block_len).sum(axis=1)
    return float(batch_means(sums, mu_hat, block_len))


def batch_means_stderr(estimate, n_blocks: int):
    """Large-sample standard error of a batch-means estimate (chi-square with K dof)."""
    return np.asarray(estimate) * np.sqrt(2.0 / n_blocks)


def projected_block_sums(block_counts, p, m: int, block_len: int) -> np.ndarray:
    """Per-block increments of the projected process ``M t - sum_i Z_i / p_i``."""
    counts = np.asarray(block_counts, dtype=float)
    return m * block_len - counts @ (1.0 / np.asarray(p, dtype=float))


def projected_variance(block_counts, p, m: int, block_len: int) -> float:
    """Batch-means estimate of ``Var(X(T)) / T`` using the known zero drift."""
    sums = projected_block_sums(block_counts, p, m, block_len)
    return float(batch_means(sums, 0.0, block_len))


def projected_increment_stats(delivered, proj_sq_sum: float, horizon: int, p, m: int):
    """Sample mean and its standard error for one-slot increments of ``X(t)``."""
    total = m * horizon - float(np.sum(np.asarray(delivered, float) / np.asarray(p, float)))
    mean = total / horizon
    var = max(proj_sq_sum / horizon - mean**2, 0.0)
    return mean, float(np.sqrt(var / horizon))


class EmpiricalCDF:
    """Right-continuous empirical distribution function of integer samples."""

    def __init__(self, samples: Iterable[int]):
        data = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        if data.size == 0:
            raise ValueError("empirical_cdf needs at least one sample")
        self._data = data

    @property
    def n(self) -> int:
        return self._data.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self._data, x, side="right") / self._data.size
        return float(out) if out.ndim == 0 else out


def empirical_cdf(samples) -> EmpiricalCDF:
    return EmpiricalCDF(samples)


def inverse_gaussian_cdf(x, mean: float, shape: float):
    """CDF of the inverse-Gaussian distribution with the given mean and shape.

    ``Phi(sqrt(shape/x) (x/mean - 1)) + exp(2 shape/mean) Phi(-sqrt(shape/x) (x/mean + 1))``,
    with the second term evaluated in log space so large ``shape/mean`` does
    not overflow.  ``x <= 0`` maps to 0 and ``x = inf`` to 1.
    """
    if mean <= 0 or shape <= 0:
        raise ValueError("inverse Gaussian needs mean > 0 and shape > 0")
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    pos = (x > 0) & np.isfinite(x)
    xp = x[pos]
    r = np.sqrt(shape / xp)
    first = ndtr(r * (xp / mean - 1.0))
    second = np.exp(2.0 * shape / mean + log_ndtr(-r * (xp / mean + 1.0)))
    out[pos] = np.clip(first + second, 0.0, 1.0)
    out[np.isposinf(x)] = 1.0
    return float(out) if out.ndim == 0 else out


def fit_inverse_gaussian(mu: float, sigma2: float) -> tuple[float, float]:
    """Inter-delivery model matching mean ``1/mu`` and variance ``sigma2/mu**3``."""
    if mu <= 0 or sigma2 <= 0:
        raise ValueError("fit needs mu > 0 and sigma2 > 0")
    return 1.0 / mu, 1.0 / sigma2


def cdf_max_gap(f_emp: Callable, f_model: Callable, x_max: int) -> float:
    """Largest ``|F_emp(k) - F_model(k)|`` over integers ``k = 1..x_max``."""
    if x_max < 1:
        raise ValueError("x_max must be at least 1")
    k = np.arange(1, x_max + 1, dtype=float)
    return float(np.max(np.abs(np.asarray(f_emp(k), float) - np.asarray(f_model(k), float))))


def fit_inverse_gaussian_moments(gaps) -> tuple[float, float]:
    """Inverse-Gaussian ``(mean, shape)`` matching the sample mean and variance of ``gaps``."""
    x = np.asarray(gaps, dtype=float)
    if x.size < 2:
        raise ValueError("moment fit needs at least two gaps")
    mean, var = float(x.mean()), float(x.var())
    if var <= 0:
        raise ValueError("moment fit needs gaps with positive variance")
    return mean, mean**3 / var


FIT_SOURCES = ("target", "moments")


def cdf_comparison(gaps, mu: float, sigma2: float, x_max: int | None = None,
                   fit: str = "target"):
    """Rows ``(k, F_emp(k), F_ig(k))`` comparing observed gaps with an inverse Gaussian.

    ``fit="target"`` uses ``mean = 1/mu`` and ``shape = 1/sigma2`` (pass
    empirical ``mu``, ``sigma2`` to fit from a trace's own second-order
    estimates); ``fit="moments"`` ignores them and matches the gaps' sample
    mean and variance.
    """
    f_emp = empirical_cdf(gaps)
    if fit == "target":
        mean, shape = fit_inverse_gaussian(mu, sigma2)
    elif fit == "moments":
        mean, shape = fit_inverse_gaussian_moments(gaps)
    else:
        raise ValueError(f"unknown fit {fit!r}; expected one of {FIT_SOURCES}")
    if x_max is None:
        x_max = int(np.max(gaps))
    k = np.arange(1, x_max + 1)
    return k, f_emp(k), inverse_gaussian_cdf(k.astype(float), mean, shape)


def write_cdf_csv(fh: IO[str], k, f_emp, f_model) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["k", "empirical_cdf", "inverse_gaussian_cdf"])
    for row in zip(k, f_emp, f_model):
        writer.writerow([int(row[0]), f"{row[1]:.10g}", f"{row[2]:.10g}"])
