"""
Fractional differencing weights and filters.

The coefficients of (1 - B)^d are built with the product recurrence

    w_0 = 1,    w_j = w_{j-1} * (j - 1 - d) / j

and never through Gamma functions. The derivative with respect to d follows
the coupled recurrence

    dw_0 = 0,   dw_j = dw_{j-1} * (j - 1 - d) / j - w_{j-1} / j
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.signal import lfilter

from errors import DomainError

DEFAULT_K = 100

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class FracWeights:
    """Truncated coefficients w_0..w_K of (1 - B)^d and their d-derivatives."""

    d: float
    K: int
    w: np.ndarray
    dw: np.ndarray

    def __post_init__(self):
        self.w.setflags(write=False)
        self.dw.setflags(write=False)


def _check_domain(d: float, K: int, lower_open: bool = True) -> None:
    if K < 1:
        raise DomainError(f"truncation K must be >= 1, got {K}")
    if not np.isfinite(d) or d >= 1.0 or d < 0.0 or (lower_open and d == 0.0):
        bound = "(0, 1)" if lower_open else "[0, 1)"
        raise DomainError(f"memory parameter d must lie in {bound}, got {d}")


def frac_weights(d: float, K: int = DEFAULT_K) -> FracWeights:
    """
    Compute w_0..w_K of (1 - B)^d together with dw_j/dd.

    Args:
        d: Memory parameter in (0, 1)
        K: Truncation lag (>= 1)

    Returns:
        FracWeights with float64 arrays of length K + 1
    """
    _check_domain(float(d), int(K))
    d = float(d)
    w = np.empty(K + 1)
    dw = np.empty(K + 1)
    w[0], dw[0] = 1.0, 0.0
    for j in range(1, K + 1):
        factor = (j - 1 - d) / j
        w[j] = w[j - 1] * factor
        dw[j] = dw[j - 1] * factor - w[j - 1] / j
    return FracWeights(d=d, K=int(K), w=w, dw=dw)


def frac_weights_grad(d: float, K: int = DEFAULT_K) -> np.ndarray:
    """Return dw_0..dw_K, the derivatives of the weights with respect to d."""
    return frac_weights(d, K).dw.copy()


def frac_weight_table(d: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Weights and derivatives for a vector of memory parameters at once.

    Written as w_j = -d * u_j and dw_j = u_j * (d * s_j - 1) with
    u_j = prod_{i=2..j} (i-1-d)/i and s_j = sum_{i=2..j} 1/(i-1-d), which is
    the same recurrence unrolled and stays finite at d = 0. No domain checks:
    callers pass d in [0, 1).

    Args:
        d: Memory parameters, shape (n,)
        K: Truncation lag

    Returns:
        (w, dw), each of shape (n, K + 1)
    """
    d = np.asarray(d, dtype=float).reshape(-1)
    n = d.shape[0]
    w = np.empty((n, K + 1))
    dw = np.empty((n, K + 1))
    w[:, 0], dw[:, 0] = 1.0, 0.0

    u = np.ones((n, K))
    s = np.zeros((n, K))
    if K > 1:
        i = np.arange(2, K + 1, dtype=float)
        gap = (i - 1.0)[None, :] - d[:, None]
        u[:, 1:] = np.cumprod(gap / i[None, :], axis=1)
        s[:, 1:] = np.cumsum(1.0 / gap, axis=1)
    w[:, 1:] = -d[:, None] * u
    dw[:, 1:] = u * (d[:, None] * s - 1.0)
    return w, dw


def frac_integration_weights(d: float, K: int) -> np.ndarray:
    """
    Coefficients psi_0..psi_K of (1 - B)^{-d}.

    psi_0 = 1 and psi_k = psi_{k-1} * (k - 1 + d) / k. This is the inverse of
    the differencing filter, so convolving it with frac_weights(d) gives the
    unit impulse up to the truncation lag.
    """
    _check_domain(float(d), int(K), lower_open=False)
    k = np.arange(1, K + 1, dtype=float)
    psi = np.empty(K + 1)
    psi[0] = 1.0
    psi[1:] = np.cumprod((k - 1.0 + d) / k)
    return psi


def apply_memory_filter(history: np.ndarray, d: ArrayLike, K: int = DEFAULT_K) -> ArrayLike:
    """
    Memory filter F = sum_{j=1..K} w_j(d) x^{t-j+1}.

    Args:
        history: Most-recent-first window x^t, x^{t-1}, ...; shape (L,) or
            (L, p). Entries beyond the window count as zero.
        d: Scalar, or one memory parameter per coordinate for (L, p) input
        K: Truncation lag

    Returns:
        Scalar for univariate history, otherwise an array of shape (p,)
    """
    history = np.asarray(history, dtype=float)
    if history.ndim == 0 or history.shape[0] < 1:
        raise DomainError("memory filter needs a window of length >= 1")
    univariate = history.ndim == 1
    window = history.reshape(history.shape[0], -1)
    p = window.shape[1]

    d_vec = np.broadcast_to(np.asarray(d, dtype=float), (p,))
    for value in d_vec:
        _check_domain(float(value), int(K), lower_open=False)
    if np.all(d_vec == 0.0):
        zero = np.zeros(p)
        return 0.0 if univariate else zero

    lags = min(K, window.shape[0])
    w, _ = frac_weight_table(d_vec, K)
    filtered = np.einsum("pj,jp->p", w[:, 1:lags + 1], window[:lags])
    return float(filtered[0]) if univariate else filtered


def apply_fracdiff(series: np.ndarray, d: float, K: int = DEFAULT_K) -> np.ndarray:
    """
    Truncated fractional difference of a series.

    output_t = sum_{j=0..min(t,K)} w_j(d) series_{t-j}, with zero padding
    before the first sample. d = 0 returns a copy of the input.

    Args:
        series: Shape (n,) or (n, p), n >= 1
        d: Memory parameter in [0, 1)
        K: Truncation lag

    Returns:
        Array with the same shape as series
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 0 or series.shape[0] < 1:
        raise DomainError("series must contain at least one sample")
    _check_domain(float(d), int(K), lower_open=False)
    if d == 0.0:
        return series.copy()
    weights = frac_weights(d, K).w
    return lfilter(weights, [1.0], series, axis=0)
