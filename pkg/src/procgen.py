"""
Synthetic series generators.

- ARFIMA(p, d, q): long memory for d in (0, 0.5), plain ARMA for d = 0
- network processes: linear Markov chain, RNN and LSTM processes that feed
  their previous output back as input (short-memory controls)

All draws come from rng.make_rng(seed), so (spec, n, seed) fixes the output.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve, lfilter
from scipy.special import expit

from diagnostics import spectral_radius
from errors import DivergenceError, DomainError, ShapeError
from fracdiff import frac_integration_weights
from networks import activate
from rng import make_rng
from timeseries import TimeSeries

DEFAULT_BURN_IN = 2000
STATIONARITY_MARGIN = 1e-6
MIN_TRUNCATION = 1000
DIVERGENCE_BOUND = 1e12

PROCESS_KINDS = ("linear-mc", "rnn", "lstm")


# =============================================================================
# ARFIMA
# =============================================================================

@dataclass(frozen=True)
class ArfimaSpec:
    """
    (1 - sum phi_i B^i)(1 - B)^d Y_t = (1 + sum theta_j B^j) e_t,  e_t ~ N(0, noise_std^2).

    truncation is the number of MA(inf) coefficients of (1 - B)^{-d} used;
    None uses the full simulated length (burn_in + n); an explicit value must
    be at least MIN_TRUNCATION.
    """

    ar: tuple[float, ...] = ()
    d: float = 0.0
    ma: tuple[float, ...] = ()
    noise_std: float = 1.0
    burn_in: int = DEFAULT_BURN_IN
    truncation: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(v) for v in self.ar))
        object.__setattr__(self, "ma", tuple(float(v) for v in self.ma))

    def validate(self) -> None:
        if not 0.0 <= self.d < 0.5:
            raise DomainError(f"ARFIMA d must lie in [0, 0.5), got {self.d}")
        if self.noise_std < 0:
            raise DomainError(f"noise_std must be non-negative, got {self.noise_std}")
        if self.burn_in < 0:
            raise DomainError(f"burn_in must be non-negative, got {self.burn_in}")
        if self.truncation is not None and self.truncation < MIN_TRUNCATION:
            raise DomainError(f"truncation must be >= {MIN_TRUNCATION}, got {self.truncation}")
        if self.ar:
            rho = spectral_radius(ar_companion(self.ar), tol=1e-9)
            if rho >= 1.0 - STATIONARITY_MARGIN:
                raise DomainError(
                    f"AR polynomial is not stationary (companion spectral radius {rho:.6f})"
                )

    @classmethod
    def from_json(cls, doc: dict) -> "ArfimaSpec":
        return cls(
            ar=tuple(doc.get("ar", ())),
            d=float(doc.get("d", 0.0)),
            ma=tuple(doc.get("ma", ())),
            noise_std=float(doc.get("noise_std", 1.0)),
            burn_in=int(doc.get("burn_in", DEFAULT_BURN_IN)),
            truncation=doc.get("truncation"),
        )


def ar_companion(ar: tuple[float, ...]) -> np.ndarray:
    """Companion matrix of 1 - phi_1 z - ... - phi_p z^p."""
    p = len(ar)
    companion = np.zeros((p, p))
    companion[0] = ar
    companion[1:, :-1] = np.eye(p - 1)
    return companion


def arma_filter(noise: np.ndarray, ar: tuple[float, ...], ma: tuple[float, ...]) -> np.ndarray:
    """ARMA recursion u_t = sum phi_i u_{t-i} + e_t + sum theta_j e_{t-j}, zero start."""
    return lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], noise)


def generate_arfima(spec: ArfimaSpec, n: int, seed: int) -> TimeSeries:
    """
    Simulate an ARFIMA series.

    Draws burn_in + n Gaussian innovations, runs the ARMA recursion, applies
    the truncated expansion of (1 - B)^{-d} and drops the burn-in.

    Args:
        spec: ArfimaSpec
        n: Number of samples returned
        seed: Run seed

    Returns:
        Univariate TimeSeries of length n
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    spec.validate()
    total = spec.burn_in + n
    noise = make_rng(seed).standard_normal(total) * spec.noise_std
    y = arma_filter(noise, spec.ar, spec.ma)
    if spec.d > 0.0:
        length = min(spec.truncation or total, total)
        psi = frac_integration_weights(spec.d, length - 1) if length > 1 else np.ones(1)
        y = fftconvolve(y, psi)[:total]
    return TimeSeries(y[spec.burn_in:])


# =============================================================================
# Network processes
# =============================================================================

def process_shapes(kind: str, p: int, q: int) -> dict[str, tuple]:
    if kind == "linear-mc":
        return {"W": (p + q, p + q)}
    if kind == "rnn":
        return {"W_zh": (p, q), "W_hh": (q, q), "W_hy": (q, p), "b_h": (q,), "b_z": (p,)}
    if kind == "lstm":
        shapes = {}
        for gate in "fioc":
            shapes[f"W_{gate}h"] = (q, q)
            shapes[f"W_{gate}y"] = (q, p)
            shapes[f"b_{gate}"] = (q,)
        return {**shapes, "W_zh": (p, q), "b_z": (p,)}
    raise DomainError(f"unknown process kind: {kind} (expected one of {', '.join(PROCESS_KINDS)})")


@dataclass(frozen=True)
class ProcessSpec:
    """A recurrent network process driven by its own previous output."""

    kind: str
    dims: tuple[int, int]
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    noise_std: float = 1.0
    activation: str = "tanh"
    output_fn: str = "identity"

    def __post_init__(self):
        p, q = (int(v) for v in self.dims)
        object.__setattr__(self, "dims", (p, q))
        shapes = process_shapes(self.kind, p, q)
        if set(shapes) != set(self.weights):
            raise ShapeError(
                f"{self.kind} process needs weights {sorted(shapes)}, got {sorted(self.weights)}"
            )
        weights = {}
        for name, shape in shapes.items():
            value = np.asarray(self.weights[name], dtype=float)
            if value.size == int(np.prod(shape)):
                value = value.reshape(shape)
            if value.shape != shape:
                raise ShapeError(f"{name} has shape {value.shape}, expected {shape}")
            weights[name] = value
        object.__setattr__(self, "weights", weights)
        if self.noise_std < 0:
            raise DomainError(f"noise_std must be non-negative, got {self.noise_std}")

    @classmethod
    def from_json(cls, doc: dict) -> "ProcessSpec":
        return cls(
            kind=doc["kind"],
            dims=tuple(doc.get("dims", (1, 1))),
            weights=doc.get("weights", {}),
            noise_std=float(doc.get("noise_std", 1.0)),
            activation=doc.get("activation", "tanh"),
            output_fn=doc.get("output_fn", "identity"),
        )


def generate_network_process(spec: ProcessSpec, n: int, seed: int,
                             divergence_bound: float = DIVERGENCE_BOUND) -> TimeSeries:
    """
    Iterate a network process with y^(0) = 0, h^(0) = 0.

    Gaussian noise is added to the output equation only. A state that becomes
    non-finite or exceeds divergence_bound raises DivergenceError with the
    1-based step number.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    p, q = spec.dims
    noise = make_rng(seed).standard_normal((n, p)) * spec.noise_std
    out = np.zeros((n, p))
    W = spec.weights

    def check(step: int, *states: np.ndarray) -> None:
        for state in states:
            if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > divergence_bound:
                raise DivergenceError(step, f"{spec.kind} process diverged at step {step}")

    with np.errstate(over="ignore", invalid="ignore"):
        if spec.kind == "linear-mc":
            state = np.zeros(p + q)
            for t in range(n):
                state = W["W"] @ state
                state[:p] += noise[t]
                check(t + 1, state)
                out[t] = state[:p]

        elif spec.kind == "rnn":
            h, y = np.zeros(q), np.zeros(p)
            for t in range(n):
                h = activate(spec.activation, W["W_hh"] @ h + W["W_hy"] @ y + W["b_h"])
                y = activate(spec.output_fn, W["W_zh"] @ h + W["b_z"]) + noise[t]
                check(t + 1, h, y)
                out[t] = y

        else:
            h, c, y = np.zeros(q), np.zeros(q), np.zeros(p)
            for t in range(n):
                f = expit(W["W_fh"] @ h + W["W_fy"] @ y + W["b_f"])
                i = expit(W["W_ih"] @ h + W["W_iy"] @ y + W["b_i"])
                o = expit(W["W_oh"] @ h + W["W_oy"] @ y + W["b_o"])
                candidate = activate(spec.activation, W["W_ch"] @ h + W["W_cy"] @ y + W["b_c"])
                c = f * c + i * candidate
                h = o * activate(spec.activation, c)
                y = activate(spec.output_fn, W["W_zh"] @ h + W["b_z"]) + noise[t]
                check(t + 1, h, c, y)
                out[t] = y

    return TimeSeries(out)
