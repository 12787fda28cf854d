"""
Memory diagnostics and ergodicity checks.

- acf / periodogram: sample autocorrelation and spectrum
- classify_decay: exponential vs polynomial tail of a coefficient sequence
- memory_signature: long/short-memory call for a finite series
- spectral_radius: Gelfand estimate ||W^s||_1^(1/s)
- check_*_ergodicity: sufficient conditions for geometric ergodicity.
  They return "short-memory-proven" or "inconclusive", never "long memory";
  only the linear chain check can also say "not-geometrically-ergodic".
- impulse_response: coefficients A_k of linearized networks
"""

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import fft
from scipy.special import expit
from scipy.stats import linregress

from errors import (
    DegenerateSeriesError,
    DomainError,
    InsufficientDataError,
    ShapeError,
    UnsupportedConfigurationError,
)
from fracdiff import frac_weight_table
from networks import CellParams
from timeseries import TimeSeries, as_array

PROVEN = "short-memory-proven"
INCONCLUSIVE = "inconclusive"
NOT_ERGODIC = "not-geometrically-ergodic"

DEFAULT_A = 0.99
DECAY_R2_THRESHOLD = 0.8
DEFAULT_TAIL_START = 20
MIN_TAIL_POINTS = 20
LONG_MEMORY_D = 0.15

BOUNDED_FUNCTIONS = ("sigmoid", "tanh", "softmax")

SeriesLike = Union[TimeSeries, np.ndarray]


def _univariate(series: SeriesLike) -> np.ndarray:
    x = as_array(series)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ShapeError(f"expected a univariate series, got {x.shape[1]} columns")
        x = x[:, 0]
    return np.asarray(x, dtype=float)


# =============================================================================
# ACF and periodogram
# =============================================================================

@dataclass
class AcfResult:
    lags: np.ndarray
    autocovariance: np.ndarray
    autocorrelation: np.ndarray


def acf(series: SeriesLike, max_lag: int, mean: Optional[float] = None) -> AcfResult:
    """
    Biased sample autocovariance and autocorrelation up to max_lag.

    gamma_k = (1/n) sum_{t} (x_t - m)(x_{t+k} - m), with m the sample mean
    unless a known process mean is given.
    """
    x = _univariate(series)
    n = x.shape[0]
    if max_lag < 1:
        raise DomainError(f"max_lag must be >= 1, got {max_lag}")
    if n <= max_lag:
        raise InsufficientDataError(f"need more than {max_lag} observations, got {n}")

    centered = x - (x.mean() if mean is None else float(mean))
    nfft = fft.next_fast_len(2 * n)
    spectrum = fft.rfft(centered, nfft)
    acov = fft.irfft(spectrum * np.conj(spectrum), nfft)[:max_lag + 1] / n
    if acov[0] <= 0.0 or not np.any(centered):
        raise DegenerateSeriesError("series has zero variance")

    r = acov / acov[0]
    r[0] = 1.0
    return AcfResult(np.arange(max_lag + 1), acov, r)


@dataclass
class SpectrumResult:
    frequencies: np.ndarray
    ordinates: np.ndarray
    n: int

    def mean_ordinate(self) -> float:
        """Average ordinate over all n Fourier frequencies; equals gamma_0 / (2 pi)."""
        I = self.ordinates
        if self.n % 2 == 0:
            total = 2.0 * I[:-1].sum() + I[-1]
        else:
            total = 2.0 * I.sum()
        return float(total / self.n)

    def low_frequency_slope(self, m: int) -> float:
        """Least-squares slope of log I against log lambda over the lowest m frequencies."""
        if m < 3 or m > self.ordinates.shape[0]:
            raise InsufficientDataError(f"cannot fit over {m} of {self.ordinates.shape[0]} frequencies")
        lam, I = self.frequencies[:m], self.ordinates[:m]
        keep = I > 0
        return float(linregress(np.log(lam[keep]), np.log(I[keep])).slope)


def periodogram(series: SeriesLike) -> SpectrumResult:
    """
    I(lambda_j) = |sum_t (x_t - mean) exp(-i t lambda_j)|^2 / (2 pi n)
    at lambda_j = 2 pi j / n, j = 1..floor(n/2).
    """
    x = _univariate(series)
    n = x.shape[0]
    if n < 16:
        raise InsufficientDataError(f"periodogram needs at least 16 observations, got {n}")
    centered = x - x.mean()
    if not np.any(centered):
        raise DegenerateSeriesError("series has zero variance")
    coeffs = fft.rfft(centered)[1:n // 2 + 1]
    ordinates = (coeffs.real ** 2 + coeffs.imag ** 2) / (2.0 * np.pi * n)
    frequencies = 2.0 * np.pi * np.arange(1, n // 2 + 1) / n
    return SpectrumResult(frequencies, ordinates, n)


# =============================================================================
# Decay classification
# =============================================================================

@dataclass
class DecayClass:
    kind: str
    rate: Optional[float]
    fit_r2: tuple[float, float]
    tail_start: int
    points: int
    zeros_excluded: int

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "rate": self.rate,
            "fit_r2": {"exponential": self.fit_r2[0], "polynomial": self.fit_r2[1]},
            "tail_start": self.tail_start,
            "points": self.points,
            "zeros_excluded": self.zeros_excluded,
        }


def classify_decay(
    coeffs: np.ndarray,
    tail_start: int = DEFAULT_TAIL_START,
    threshold: float = DECAY_R2_THRESHOLD,
) -> DecayClass:
    """
    Decide whether |c_k| decays like rho^k or like k^alpha.

    coeffs[k] is the coefficient at lag k. Fits log|c_k| against k and
    against log k over k >= max(tail_start, 1); exact zeros are dropped.

    Returns:
        DecayClass; rate is rho for exponential, alpha for polynomial and
        None when both R^2 fall below threshold (undecided)
    """
    c = np.asarray(coeffs, dtype=float).reshape(-1)
    k = np.arange(c.shape[0], dtype=float)
    start = max(int(tail_start), 1)
    k, mags = k[start:], np.abs(c[start:])
    nonzero = (mags > 0) & np.isfinite(mags)
    zeros = int(np.sum(~nonzero))
    k, mags = k[nonzero], mags[nonzero]
    if k.shape[0] < MIN_TAIL_POINTS:
        raise InsufficientDataError(
            f"need {MIN_TAIL_POINTS} nonzero tail coefficients after lag {start}, got {k.shape[0]}"
        )

    log_mags = np.log(mags)
    if np.ptp(log_mags) == 0.0:
        return DecayClass("undecided", None, (0.0, 0.0), start, k.shape[0], zeros)
    exp_fit = linregress(k, log_mags)
    poly_fit = linregress(np.log(k), log_mags)
    r2 = (float(exp_fit.rvalue ** 2), float(poly_fit.rvalue ** 2))

    if max(r2) < threshold:
        return DecayClass("undecided", None, r2, start, k.shape[0], zeros)
    if r2[0] >= r2[1]:
        return DecayClass("exponential", float(np.exp(exp_fit.slope)), r2, start, k.shape[0], zeros)
    return DecayClass("polynomial", float(poly_fit.slope), r2, start, k.shape[0], zeros)


@dataclass
class MemorySignature:
    conclusion: str
    d_estimate: float
    spectral_slope: float
    bandwidth: int
    acf_decay: Optional[DecayClass]

    def to_json(self) -> dict:
        return {
            "conclusion": self.conclusion,
            "d_estimate": self.d_estimate,
            "spectral_slope": self.spectral_slope,
            "bandwidth": self.bandwidth,
            "acf_decay": self.acf_decay.to_json() if self.acf_decay else None,
        }


def memory_signature(series: SeriesLike, max_lag: Optional[int] = None,
                     threshold: float = LONG_MEMORY_D) -> MemorySignature:
    """
    Heuristic long/short-memory call for finite data.

    The low-frequency periodogram slope over the lowest floor(sqrt(n))
    frequencies gives d_hat = -slope / 2; long memory when d_hat > threshold.
    The ACF decay class is reported alongside.
    """
    x = _univariate(series)
    n = x.shape[0]
    spectrum = periodogram(x)
    bandwidth = min(max(int(np.sqrt(n)), 8), spectrum.ordinates.shape[0])
    slope = spectrum.low_frequency_slope(bandwidth)
    d_hat = -slope / 2.0

    lags = max_lag or min(200, n // 4)
    decay = None
    if lags > MIN_TAIL_POINTS:
        try:
            decay = classify_decay(acf(x, lags).autocorrelation, tail_start=1)
        except InsufficientDataError:
            decay = None

    conclusion = "long-memory" if d_hat > threshold else "short-memory"
    return MemorySignature(conclusion, float(d_hat), float(slope), bandwidth, decay)


# =============================================================================
# Spectral radius
# =============================================================================

def spectral_radius(W: np.ndarray, tol: float = 1e-6, max_doublings: int = 40) -> float:
    """
    rho(W) from the Gelfand formula with s = 2^m.

    Repeated squaring of the normalized power keeps the numbers finite. The
    iteration stops when successive estimates agree to relative tol or after
    max_doublings squarings.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeError(f"spectral radius needs a square matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise DomainError("matrix entries must be finite")
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")

    power = W.copy()
    log_scale = 0.0
    s = 1.0
    previous = None
    for _ in range(max_doublings + 1):
        norm = np.abs(power).sum(axis=0).max()
        if norm == 0.0:
            return 0.0
        log_norm = np.log(norm) + log_scale
        estimate = float(np.exp(log_norm / s))
        if previous is not None and abs(estimate - previous) <= tol * estimate:
            return estimate
        previous = estimate
        power = power / norm
        power = power @ power
        log_scale = 2.0 * log_norm
        s *= 2.0
    return previous


# =============================================================================
# Ergodicity checks
# =============================================================================

@dataclass
class Inequality:
    name: str
    lhs: float
    bound: float
    satisfied: bool

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "bound": self.bound, "satisfied": self.satisfied}


@dataclass
class Verdict:
    conclusion: str
    checked_inequalities: list[Inequality]
    branch: str
    premises: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "schema": "verdict/1",
            "conclusion": self.conclusion,
            "branch": self.branch,
            "premises": list(self.premises),
            "checked_inequalities": [item.to_json() for item in self.checked_inequalities],
        }


def _le(name: str, lhs: float, a: float) -> Inequality:
    lhs = float(lhs)
    return Inequality(name, lhs, float(a), bool(lhs <= a))


def _verdict(checks: list[Inequality], branch: str, premises: list[str]) -> Verdict:
    conclusion = PROVEN if all(item.satisfied for item in checks) else INCONCLUSIVE
    return Verdict(conclusion, checks, branch, premises)


def _check_a(a: float) -> None:
    if not 0.0 < a < 1.0:
        raise DomainError(f"contraction constant a must lie in (0, 1), got {a}")


def _scalar(params: CellParams, name: str) -> float:
    return float(params[name].reshape(-1)[0])


def check_rnn_ergodicity(
    params: CellParams,
    output_fn: Optional[str] = None,
    activation_fn: Optional[str] = None,
    a: float = DEFAULT_A,
) -> Verdict:
    """
    Sufficient conditions for geometric ergodicity of an RNN process.

    Bounded activation (sigmoid/tanh): always proven. Identity/ReLU
    activation: the univariate weight table, with W_hx standing for the
    feedback weight w_hy.
    """
    _check_a(a)
    if params.kind != "rnn":
        raise UnsupportedConfigurationError(f"RNN checker got a {params.kind} cell")
    output_fn = output_fn or params.output_fn
    activation_fn = activation_fn or params.activation

    if activation_fn in BOUNDED_FUNCTIONS:
        branch = "corollary-1" if output_fn in BOUNDED_FUNCTIONS else "table-1-bounded-activation"
        premises = [f"activation {activation_fn} is bounded and continuous"]
        if output_fn in BOUNDED_FUNCTIONS:
            premises.append(f"output {output_fn} is bounded and continuous")
        return _verdict([], branch, premises)

    if activation_fn not in ("identity", "relu"):
        raise UnsupportedConfigurationError(f"no RNN condition for activation {activation_fn}")
    if params.dims != (1, 1, 1):
        raise UnsupportedConfigurationError(
            f"the weight table covers p = q = 1 only, got dims {params.dims}"
        )

    w_zh, w_hh, w_hy = (_scalar(params, n) for n in ("W_zh", "W_hh", "W_hx"))
    if output_fn == "identity":
        checks = [
            _le("|w_zh * w_hh| <= a", abs(w_zh * w_hh), a),
            _le("|w_zh * w_hy| <= a", abs(w_zh * w_hy), a),
            _le("|w_hh| <= a", abs(w_hh), a),
            _le("|w_hy| <= a", abs(w_hy), a),
        ]
    elif output_fn in ("sigmoid", "softmax"):
        checks = [_le("|w_hh| <= a", abs(w_hh), a), _le("|w_hy| <= a", abs(w_hy), a)]
    else:
        raise UnsupportedConfigurationError(f"no RNN condition for output {output_fn}")
    return _verdict(checks, "table-1", [f"activation {activation_fn}, output {output_fn}, p = q = 1"])


def _output_bound(params: CellParams, output_fn: str) -> float:
    """sup over the unit l-inf ball of ||g(W_zh x + b_z)||_1."""
    if output_fn in BOUNDED_FUNCTIONS:
        return float(params.p_z) if output_fn != "softmax" else 1.0
    return float(np.abs(params["W_zh"]).sum() + np.abs(params["b_z"]).sum())


def check_lstm_ergodicity(
    params: CellParams,
    a: float = DEFAULT_A,
    gate_fn: str = "sigmoid",
    output_fn: Optional[str] = None,
) -> Verdict:
    """
    Sufficient conditions for geometric ergodicity of an LSTM process.

    With sigmoid gates: sigmoid(||W_fh|| + ||W_fy|| + ||b_f||) <= a in the
    matrix l-inf norm (max absolute row sum). For p = q = 1 the matching
    univariate table row is evaluated as well.
    """
    _check_a(a)
    if params.kind != "lstm":
        raise UnsupportedConfigurationError(f"LSTM checker got a {params.kind} cell")
    output_fn = output_fn or params.output_fn
    univariate = params.dims == (1, 1, 1)
    if gate_fn not in ("sigmoid", "tanh", "relu", "identity"):
        raise UnsupportedConfigurationError(f"no LSTM condition for gate function {gate_fn}")
    if gate_fn != "sigmoid" and not univariate:
        raise UnsupportedConfigurationError(f"{gate_fn} gates are covered for p = q = 1 only")

    bound_m = _output_bound(params, output_fn)
    premises = [
        "inputs scaled to [-1, 1]",
        f"output bound M = {bound_m:.6g} is finite ({output_fn} output)",
    ]
    checks = []
    branch = "corollary-2"
    if gate_fn == "sigmoid":
        norms = (
            np.linalg.norm(params["W_fh"], ord=np.inf)
            + np.linalg.norm(params["W_fy"], ord=np.inf)
            + np.max(np.abs(params["b_f"]))
        )
        checks.append(_le("sigmoid(||W_fh|| + ||W_fy|| + ||b_f||) <= a", expit(norms), a))

    if univariate:
        branch = "corollary-2+table-a1" if gate_fn == "sigmoid" else "table-a1"
        w = {n: _scalar(params, n) for n in ("W_fh", "W_fy", "b_f", "W_oh", "W_ih", "W_oy", "W_iy", "W_zh")}
        forget_sup = abs(w["W_fh"]) + abs(w["W_fy"]) + abs(w["b_f"])
        if gate_fn in ("relu", "identity"):
            if output_fn == "identity":
                checks += [
                    _le("|w_oh| + |w_ih| + |w_zh * w_oh| <= a",
                        abs(w["W_oh"]) + abs(w["W_ih"]) + abs(w["W_zh"] * w["W_oh"]), a),
                    _le("|w_oy| + |w_iy| + |w_zh * w_oy| <= a",
                        abs(w["W_oy"]) + abs(w["W_iy"]) + abs(w["W_zh"] * w["W_oy"]), a),
                ]
            elif output_fn in ("sigmoid", "softmax"):
                checks += [
                    _le("|w_oh| + |w_ih| <= a", abs(w["W_oh"]) + abs(w["W_ih"]), a),
                    _le("|w_oy| + |w_iy| <= a", abs(w["W_oy"]) + abs(w["W_iy"]), a),
                ]
            else:
                raise UnsupportedConfigurationError(f"no LSTM table row for output {output_fn}")
            checks.append(_le("sup |w_fh v + w_fy u + b_f| <= a", forget_sup, a))
        elif output_fn in ("sigmoid", "softmax"):
            gate = expit if gate_fn == "sigmoid" else np.tanh
            total = w["W_fh"] + w["W_fy"] + w["b_f"]
            checks.append(_le(f"|{gate_fn}(w_fh + w_fy + b_f)| <= a", abs(gate(total)), a))
    return _verdict(checks, branch, premises)


def check_linear_ergodicity(W: np.ndarray, tol: float = 1e-9) -> Verdict:
    """A linear chain Y_t = W Y_{t-1} + e_t is geometrically ergodic iff rho(W) < 1."""
    rho = spectral_radius(W, tol=tol)
    check = Inequality("rho(W) < 1", rho, 1.0, bool(rho < 1.0))
    conclusion = PROVEN if check.satisfied else NOT_ERGODIC
    return Verdict(conclusion, [check], "linear-chain", ["Gaussian innovations"])


# =============================================================================
# Impulse responses
# =============================================================================

LINEAR_KINDS = ("linear-rnn", "linear-mrnnf", "const-gates-lstm", "const-gates-mlstm")


@dataclass
class LinearSpec:
    """
    A linearized network.

    weights holds W_zh, W_hh, W_hx (linear-rnn); additionally W_zm, W_mm,
    W_mf (linear-mrnnf); W_ch, W_cx and gate values f, i, o (constant-gates
    kinds). d and K describe the fractional filter of memory kinds; K
    defaults to horizon + 1 so every reported lag has its filter term.
    """

    kind: str
    weights: dict[str, np.ndarray]
    d: Optional[np.ndarray] = None
    K: Optional[int] = None

    @classmethod
    def from_json(cls, doc: dict) -> "LinearSpec":
        if "kind" not in doc:
            raise ShapeError("linear spec needs a 'kind'")
        kind = doc["kind"]
        if kind not in LINEAR_KINDS:
            raise DomainError(f"unknown linear spec kind {kind}; expected one of {LINEAR_KINDS}")
        weights = {name: np.atleast_1d(np.asarray(v, dtype=float)) for name, v in doc.get("weights", {}).items()}
        for name, value in weights.items():
            if name.startswith("W_") and value.ndim == 1:
                weights[name] = value.reshape(1, -1) if value.size > 1 else value.reshape(1, 1)
        d = doc.get("d")
        return cls(kind, weights, None if d is None else np.atleast_1d(np.asarray(d, dtype=float)), doc.get("K"))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "weights": {n: v.tolist() for n, v in self.weights.items()},
            "d": None if self.d is None else self.d.tolist(),
            "K": self.K,
        }

    def get(self, name: str) -> np.ndarray:
        if name not in self.weights:
            raise ShapeError(f"{self.kind} spec is missing {name}")
        return self.weights[name]


def linear_spec_from_params(params: CellParams) -> LinearSpec:
    """Linearized spec of an rnn, mrnnf or constant-gates cell (biases dropped)."""
    W = params.weights
    q = params.q
    if params.kind == "rnn":
        return LinearSpec("linear-rnn", {n: W[n] for n in ("W_zh", "W_hh", "W_hx")})
    if params.kind == "mrnnf":
        weights = {n: W[n] for n in ("W_zh", "W_hh", "W_hx", "W_zm")}
        weights.update(W_mm=W["W_m"][:, :q], W_mf=W["W_m"][:, q:])
        return LinearSpec("linear-mrnnf", weights, params.fixed_d(), params.K)
    if params.kind == "const-gates-lstm":
        weights = {"W_zh": W["W_zh"], "W_ch": W["W_ch"], "W_cx": W["W_cy"],
                   "f": expit(W["b_f"]), "i": expit(W["b_i"]), "o": expit(W["b_o"])}
        return LinearSpec("const-gates-lstm", weights)
    if params.kind == "const-gates-mlstm":
        weights = {"W_zh": W["W_zh"], "W_ch": W["W_ch"], "W_cx": W["W_cx"],
                   "i": expit(W["b_i"]), "o": expit(W["b_o"])}
        return LinearSpec("const-gates-mlstm", weights, params.fixed_d(), params.K)
    raise UnsupportedConfigurationError(f"{params.kind} has no linear impulse-response form")


def _matrix_powers(A: np.ndarray, horizon: int) -> np.ndarray:
    powers = np.empty((horizon + 1,) + A.shape)
    powers[0] = np.eye(A.shape[0])
    for k in range(1, horizon + 1):
        powers[k] = A @ powers[k - 1]
    return powers


def _filter_lags(d: np.ndarray, K: int, horizon: int) -> np.ndarray:
    """w_1..w_K per coordinate, shape (min(K, horizon + 1), p)."""
    if np.any(d <= 0) or np.any(d >= 1):
        raise DomainError(f"memory parameters must lie in (0, 1), got {d}")
    w, _ = frac_weight_table(d, K)
    return w[:, 1:].T[:horizon + 1]


def _causal_convolve(G: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """sum_{j<=k} G_{k-j} diag(phi_j), truncated to the length of G."""
    out = np.zeros_like(G)
    for j in range(min(phi.shape[0], G.shape[0])):
        out[j:] += G[:G.shape[0] - j] * phi[j]
    return out


def impulse_response(spec: LinearSpec, K: int) -> np.ndarray:
    """
    Coefficients A_0..A_K of y_t = sum_k A_k x_{t-k} for a linearized network.

    Args:
        spec: LinearSpec
        K: Horizon (number of lags after A_0)

    Returns:
        Array of shape (K + 1, p_z, p_x)
    """
    if K < 1:
        raise DomainError(f"impulse-response horizon must be >= 1, got {K}")
    horizon = int(K)

    if spec.kind == "linear-rnn":
        powers = _matrix_powers(spec.get("W_hh"), horizon)
        return np.einsum("zq,kqr,rx->kzx", spec.get("W_zh"), powers, spec.get("W_hx"))

    if spec.kind == "linear-mrnnf":
        W_zh, W_hh, W_hx = spec.get("W_zh"), spec.get("W_hh"), spec.get("W_hx")
        direct = np.einsum("zq,kqr,rx->kzx", W_zh, _matrix_powers(W_hh, horizon), W_hx)
        # Memory path: G_k = W_zm W_mm^k W_mf, filter lag l carries w_{l+1}(d).
        G = np.einsum("zq,kqr,rx->kzx", spec.get("W_zm"), _matrix_powers(spec.get("W_mm"), horizon),
                      spec.get("W_mf"))
        d = _memory_vector(spec, G.shape[2])
        phi = _filter_lags(d, spec.K or horizon + 1, horizon)
        return direct + _causal_convolve(G, phi)

    if spec.kind == "const-gates-lstm":
        D_f, D_i, D_o = (np.diag(np.atleast_1d(spec.get(g))) for g in ("f", "i", "o"))
        G = D_f + D_i @ spec.get("W_ch") @ D_o
        powers = _matrix_powers(G, horizon)
        return np.einsum("zq,kqr,rx->kzx", spec.get("W_zh") @ D_o, powers, D_i @ spec.get("W_cx"))

    if spec.kind == "const-gates-mlstm":
        D_i, D_o = (np.diag(np.atleast_1d(spec.get(g))) for g in ("i", "o"))
        C = D_i @ spec.get("W_ch") @ D_o
        q = C.shape[0]
        d = _memory_vector(spec, q)
        w = _filter_lags(d, spec.K or horizon, horizon)
        theta = np.zeros((horizon + 1, q, q))
        theta[0] = np.eye(q)
        for k in range(1, horizon + 1):
            lags = min(k, w.shape[0])
            history = theta[k - 1::-1][:lags]
            theta[k] = C @ theta[k - 1] - np.einsum("jq,jqr->qr", w[:lags], history)
        return np.einsum("zq,kqr,rx->kzx", spec.get("W_zh") @ D_o, theta, D_i @ spec.get("W_cx"))

    raise DomainError(f"unknown linear spec kind: {spec.kind}")


def _memory_vector(spec: LinearSpec, size: int) -> np.ndarray:
    if spec.d is None:
        raise ShapeError(f"{spec.kind} spec needs a memory parameter d")
    d = np.broadcast_to(np.asarray(spec.d, dtype=float).reshape(-1), (size,)).copy()
    return d
