"""
Recurrent cells with forward passes and exact backpropagation through time.

Supported kinds:
    rnn, lstm                      classic cells
    mrnn, mrnnf                    RNN plus a memory unit fed by the fractional
                                   filter over the last K inputs (dynamic or fixed d)
    mlstm, mlstmf                  LSTM whose forget gate is replaced by the
                                   fractional filter over the last K cell states
    const-gates-lstm,
    const-gates-mlstm              gates are learnable constants sigma(b)

Conventions: inputs are (T, p_x), outputs (T, p_z). Every state before the
first step is zero, including the input and cell-state windows. The memory
parameter is d = 0.5 * sigmoid(a), so it stays inside (0, 0.5).
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, softmax

from errors import ContractError, DomainError, ForwardDivergenceError, SchemaError, ShapeError
from fracdiff import DEFAULT_K, frac_weight_table
from rng import INIT_STREAM, make_rng

KINDS = (
    "rnn", "lstm", "mrnn", "mrnnf", "mlstm", "mlstmf",
    "const-gates-lstm", "const-gates-mlstm",
)
MEMORY_KINDS = ("mrnn", "mrnnf", "mlstm", "mlstmf", "const-gates-mlstm")
FIXED_D_KINDS = ("mrnnf", "mlstmf", "const-gates-mlstm")

HIDDEN_ACTIVATIONS = ("tanh", "identity")
OUTPUT_FUNCTIONS = ("identity", "sigmoid", "tanh")
CELL_PARAMS_SCHEMA = "cell-params/1"

# d-gate pre-activations are clipped here so d never rounds to 0 or 0.5.
D_CLIP = 30.0

Gradients = dict[str, np.ndarray]


# =============================================================================
# Activations
# =============================================================================

def activate(name: str, a: np.ndarray) -> np.ndarray:
    """Apply a named activation (identity, tanh, sigmoid, relu, softmax)."""
    if name == "identity":
        return a
    if name == "tanh":
        return np.tanh(a)
    if name == "sigmoid":
        return expit(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "softmax":
        return softmax(a, axis=-1)
    raise DomainError(f"unknown activation: {name}")


def activation_grad(name: str, out: np.ndarray) -> np.ndarray:
    """Derivative of an elementwise activation, written in terms of its output."""
    if name == "identity":
        return np.ones_like(out)
    if name == "tanh":
        return 1.0 - out * out
    if name == "sigmoid":
        return out * (1.0 - out)
    raise DomainError(f"no elementwise derivative for activation: {name}")


def memory_param(theta: np.ndarray) -> np.ndarray:
    """d = 0.5 * sigmoid(theta)."""
    return 0.5 * expit(theta)


# =============================================================================
# Parameters
# =============================================================================

def param_shapes(kind: str, dims: tuple[int, int, int]) -> dict[str, tuple]:
    """Shape of every parameter of a cell kind, keyed by symbol name."""
    px, q, pz = dims
    out = {"W_zh": (pz, q), "b_z": (pz,)}
    rnn = {"W_hh": (q, q), "W_hx": (q, px), "b_h": (q,)}
    memory_unit = {"W_zm": (pz, q), "W_m": (q, q + px), "b_m": (q,)}

    if kind == "rnn":
        return {**rnn, **out}
    if kind == "mrnn":
        return {**rnn, **memory_unit, "W_d": (px, 2 * px + 2 * q), "b_d": (px,), **out}
    if kind == "mrnnf":
        return {**rnn, **memory_unit, "theta_d": (px,), **out}
    if kind == "lstm":
        shapes = {}
        for gate in "fioc":
            shapes[f"W_{gate}h"] = (q, q)
            shapes[f"W_{gate}y"] = (q, px)
            shapes[f"b_{gate}"] = (q,)
        return {**shapes, **out}
    if kind == "const-gates-lstm":
        return {"b_f": (q,), "b_i": (q,), "b_o": (q,),
                "W_ch": (q, q), "W_cy": (q, px), "b_c": (q,), **out}
    if kind in ("mlstm", "mlstmf"):
        shapes = {}
        for gate in "ioc":
            shapes[f"W_{gate}h"] = (q, q)
            shapes[f"W_{gate}x"] = (q, px)
            shapes[f"b_{gate}"] = (q,)
        if kind == "mlstm":
            shapes.update({"W_d": (q, 2 * q + px), "b_d": (q,)})
        else:
            shapes["theta_d"] = (q,)
        return {**shapes, **out}
    if kind == "const-gates-mlstm":
        return {"b_i": (q,), "b_o": (q,), "theta_d": (q,),
                "W_ch": (q, q), "W_cx": (q, px), "b_c": (q,), **out}
    raise DomainError(f"unknown cell kind: {kind} (expected one of {', '.join(KINDS)})")


@dataclass(frozen=True)
class CellParams:
    """Weights and biases of one cell, keyed by symbol name (W_zh, b_h, theta_d, ...)."""

    kind: str
    dims: tuple[int, int, int]
    weights: dict[str, np.ndarray]
    K: int = 0
    output_fn: str = "identity"
    activation: str = "tanh"

    def __post_init__(self):
        dims = tuple(int(v) for v in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ShapeError(f"dims must be three positive sizes, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if self.kind in MEMORY_KINDS and self.K < 1:
            raise DomainError(f"{self.kind} needs a filter truncation K >= 1, got {self.K}")
        if self.output_fn not in OUTPUT_FUNCTIONS:
            raise DomainError(f"output_fn must be one of {OUTPUT_FUNCTIONS}, got {self.output_fn}")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise DomainError(f"activation must be one of {HIDDEN_ACTIVATIONS}, got {self.activation}")

        expected = param_shapes(self.kind, dims)
        if set(expected) != set(self.weights):
            missing = sorted(set(expected) - set(self.weights))
            extra = sorted(set(self.weights) - set(expected))
            raise ShapeError(f"{self.kind} parameters mismatch: missing {missing}, unexpected {extra}")
        frozen = {}
        for name, shape in expected.items():
            value = np.array(self.weights[name], dtype=float)
            if value.shape != shape:
                raise ShapeError(f"{name} has shape {value.shape}, expected {shape}")
            value.setflags(write=False)
            frozen[name] = value
        object.__setattr__(self, "weights", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.weights[name]

    @property
    def p_x(self) -> int:
        return self.dims[0]

    @property
    def q(self) -> int:
        return self.dims[1]

    @property
    def p_z(self) -> int:
        return self.dims[2]

    def replace_weights(self, weights: dict[str, np.ndarray]) -> "CellParams":
        return CellParams(self.kind, self.dims, weights, self.K, self.output_fn, self.activation)

    def with_options(self, **changes) -> "CellParams":
        fields = {"kind": self.kind, "dims": self.dims, "weights": self.weights, "K": self.K,
                  "output_fn": self.output_fn, "activation": self.activation}
        fields.update(changes)
        return CellParams(**fields)

    def fixed_d(self) -> np.ndarray:
        """Effective d of a fixed-d kind."""
        if self.kind not in FIXED_D_KINDS:
            raise DomainError(f"{self.kind} has no fixed memory parameter")
        return memory_param(self.weights["theta_d"])

    def fingerprint(self) -> str:
        digest = hashlib.blake2b(digest_size=16)
        digest.update(f"{self.kind}|{self.dims}|{self.K}|{self.output_fn}|{self.activation}".encode())
        for name in sorted(self.weights):
            digest.update(name.encode())
            digest.update(self.weights[name].tobytes())
        return digest.hexdigest()

    def to_json(self) -> dict:
        """Versioned JSON document (cell-params/1)."""
        return {
            "schema": CELL_PARAMS_SCHEMA,
            "kind": self.kind,
            "dims": list(self.dims),
            "K": self.K,
            "output_fn": self.output_fn,
            "activation": self.activation,
            "weights": {name: value.tolist() for name, value in self.weights.items()},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CellParams":
        tag = doc.get("schema") if isinstance(doc, dict) else None
        if tag != CELL_PARAMS_SCHEMA:
            raise SchemaError(f"expected a {CELL_PARAMS_SCHEMA} document, got schema {tag!r}")
        try:
            kind = doc["kind"]
            dims = tuple(doc["dims"])
            raw = doc["weights"]
        except (KeyError, TypeError) as e:
            raise ShapeError(f"cell-params document is missing {e}") from e
        shapes = param_shapes(kind, dims)
        weights = {}
        for name, value in raw.items():
            array = np.asarray(value, dtype=float)
            if name in shapes and array.size == int(np.prod(shapes[name])):
                array = array.reshape(shapes[name])
            weights[name] = array
        return cls(kind, dims, weights, int(doc.get("K", 0)),
                   doc.get("output_fn", "identity"), doc.get("activation", "tanh"))


def init_params(
    kind: str,
    dims: tuple[int, int, int],
    K: int = DEFAULT_K,
    seed: int = 0,
    scheme: str = "uniform",
    output_fn: str = "identity",
    activation: str = "tanh",
) -> CellParams:
    """
    Initial parameters for a cell.

    Matrices are drawn uniform(-1/sqrt(q), 1/sqrt(q)); biases and theta_d
    start at zero, so fixed-d cells start at d = 0.25 and constant gates at 0.5.

    Args:
        kind: Cell kind
        dims: (p_x, q, p_z)
        K: Filter truncation (ignored by kinds without a memory filter)
        seed: Run seed; draws come from the init stream
        scheme: "uniform" or "zeros"

    Returns:
        CellParams
    """
    if scheme not in ("uniform", "zeros"):
        raise DomainError(f"unknown init scheme: {scheme}")
    shapes = param_shapes(kind, dims)
    q = dims[1]
    bound = 1.0 / np.sqrt(q)
    rng = make_rng(seed, INIT_STREAM)

    weights = {}
    for name, shape in shapes.items():
        if name.startswith("W_") and scheme == "uniform":
            weights[name] = rng.uniform(-bound, bound, size=shape)
        else:
            weights[name] = np.zeros(shape)
    return CellParams(kind, dims, weights, K if kind in MEMORY_KINDS else 0, output_fn, activation)


# =============================================================================
# Forward
# =============================================================================

@dataclass
class StateCache:
    """Per-timestep states of one forward pass, consumed by backward."""

    kind: str
    fingerprint: str
    inputs: np.ndarray
    outputs: np.ndarray
    store: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.store[name]


def forward(params: CellParams, inputs: np.ndarray) -> tuple[np.ndarray, StateCache]:
    """
    Run a cell over an input sequence.

    Args:
        params: Cell parameters
        inputs: Shape (T, p_x), or (T,) when p_x = 1

    Returns:
        (outputs of shape (T, p_z), StateCache)
    """
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != params.p_x:
        raise ShapeError(f"inputs must have shape (T, {params.p_x}), got {np.shape(inputs)}")
    if X.shape[0] < 1:
        raise DomainError("inputs must contain at least one timestep")
    if not np.all(np.isfinite(X)):
        raise DomainError("inputs must be finite")

    with np.errstate(over="ignore", invalid="ignore"):
        if params.kind == "rnn":
            store = {"H": _rnn_hidden(params, X)}
            Zpre = _output_preactivation(params, store["H"])
        elif params.kind in ("mrnn", "mrnnf"):
            store = _forward_mrnn(params, X)
            Zpre = _output_preactivation(params, store["H"], store["M"])
        elif params.kind in ("lstm", "const-gates-lstm"):
            store = _forward_lstm(params, X)
            Zpre = _output_preactivation(params, store["H"])
        else:
            store = _forward_mlstm(params, X)
            Zpre = _output_preactivation(params, store["H"])
        Z = activate(params.output_fn, Zpre)

    _check_finite(params.kind, store, Z)
    cache = StateCache(params.kind, params.fingerprint(), X, Z, store)
    return Z, cache


def _check_finite(kind: str, store: dict, Z: np.ndarray) -> None:
    bad = ~np.isfinite(Z).all(axis=1)
    for name in ("H", "M", "C"):
        if name in store:
            states = store[name][1:]
            bad |= ~np.isfinite(states).all(axis=1)
    if bad.any():
        raise ForwardDivergenceError(int(np.argmax(bad)) + 1, kind)


def _output_preactivation(params: CellParams, H: np.ndarray, M: Optional[np.ndarray] = None) -> np.ndarray:
    Zpre = H[1:] @ params["W_zh"].T + params["b_z"]
    if M is not None:
        Zpre = Zpre + M[1:] @ params["W_zm"].T
    return Zpre


def _rnn_hidden(params: CellParams, X: np.ndarray) -> np.ndarray:
    T, q = X.shape[0], params.q
    W_hh = params["W_hh"]
    drive = X @ params["W_hx"].T + params["b_h"]
    H = np.zeros((T + 1, q))
    if params.activation == "tanh":
        for t in range(T):
            H[t + 1] = np.tanh(W_hh @ H[t] + drive[t])
    else:
        for t in range(T):
            H[t + 1] = W_hh @ H[t] + drive[t]
    return H


def input_windows(X: np.ndarray, K: int) -> np.ndarray:
    """
    Most-recent-first input windows.

    Returns shape (T, p_x, K) with [t, i, j-1] = x_i^{t-j+1}; entries before
    the first input are zero.
    """
    padded = np.vstack([np.zeros((K - 1, X.shape[1])), X])
    return sliding_window_view(padded, K, axis=0)[:, :, ::-1]


def _gate(a: np.ndarray, lo: float = -D_CLIP, hi: float = D_CLIP) -> tuple[np.ndarray, np.ndarray]:
    """Clipped d-gate: returns (d, inside-mask)."""
    inside = (a > lo) & (a < hi)
    return memory_param(np.clip(a, lo, hi)), inside


def _forward_mrnn(params: CellParams, X: np.ndarray) -> dict:
    T, px, q, K = X.shape[0], params.p_x, params.q, params.K
    act = params.activation
    H = _rnn_hidden(params, X)
    windows = input_windows(X, K)
    W_m = params["W_m"]
    W_mm, W_mf = W_m[:, :q], W_m[:, q:]
    b_m = params["b_m"]

    M = np.zeros((T + 1, q))
    store = {"H": H, "M": M, "windows": windows}

    if params.kind == "mrnnf":
        d = params.fixed_d()
        w, dw = frac_weight_table(d, K)
        F = np.einsum("tpk,pk->tp", windows, w[:, 1:])
        store.update(F=F, dF=np.einsum("tpk,pk->tp", windows, dw[:, 1:]), d=d)
        drive = F @ W_mf.T + b_m
        for t in range(T):
            M[t + 1] = activate(act, W_mm @ M[t] + drive[t])
        return store

    W_d, b_d = params["W_d"], params["b_d"]
    D = np.zeros((T + 1, px))
    U = np.zeros((T, 2 * px + 2 * q))
    inside = np.zeros((T, px), dtype=bool)
    F = np.zeros((T, px))
    dF = np.zeros((T, px))
    for t in range(T):
        U[t] = np.concatenate([D[t], H[t], M[t], X[t]])
        D[t + 1], inside[t] = _gate(W_d @ U[t] + b_d)
        w, dw = frac_weight_table(D[t + 1], K)
        F[t] = np.sum(w[:, 1:] * windows[t], axis=1)
        dF[t] = np.sum(dw[:, 1:] * windows[t], axis=1)
        M[t + 1] = activate(act, W_mm @ M[t] + W_mf @ F[t] + b_m)
    store.update(D=D, U=U, inside=inside, F=F, dF=dF)
    return store


def _forward_lstm(params: CellParams, X: np.ndarray) -> dict:
    T, q = X.shape[0], params.q
    act = params.activation
    const = params.kind == "const-gates-lstm"

    if const:
        f_c, i_c, o_c = (expit(params[b]) for b in ("b_f", "b_i", "b_o"))
    else:
        XF = X @ params["W_fy"].T + params["b_f"]
        XI = X @ params["W_iy"].T + params["b_i"]
        XO = X @ params["W_oy"].T + params["b_o"]
        W_fh, W_ih, W_oh = params["W_fh"], params["W_ih"], params["W_oh"]
    XC = X @ params["W_cy"].T + params["b_c"]
    W_ch = params["W_ch"]

    H = np.zeros((T + 1, q))
    C = np.zeros((T + 1, q))
    Fg, Ig, Og = np.zeros((T, q)), np.zeros((T, q)), np.zeros((T, q))
    CT, TC = np.zeros((T, q)), np.zeros((T, q))
    for t in range(T):
        h = H[t]
        if const:
            Fg[t], Ig[t], Og[t] = f_c, i_c, o_c
        else:
            Fg[t] = expit(W_fh @ h + XF[t])
            Ig[t] = expit(W_ih @ h + XI[t])
            Og[t] = expit(W_oh @ h + XO[t])
        CT[t] = activate(act, W_ch @ h + XC[t])
        C[t + 1] = Fg[t] * C[t] + Ig[t] * CT[t]
        TC[t] = activate(act, C[t + 1])
        H[t + 1] = Og[t] * TC[t]
    return {"H": H, "C": C, "F": Fg, "I": Ig, "O": Og, "CT": CT, "TC": TC}


def _forward_mlstm(params: CellParams, X: np.ndarray) -> dict:
    T, q, K = X.shape[0], params.q, params.K
    act = params.activation
    const = params.kind == "const-gates-mlstm"
    dynamic = params.kind == "mlstm"

    if const:
        i_c, o_c = expit(params["b_i"]), expit(params["b_o"])
    else:
        XI = X @ params["W_ix"].T + params["b_i"]
        XO = X @ params["W_ox"].T + params["b_o"]
        W_ih, W_oh = params["W_ih"], params["W_oh"]
    XC = X @ params["W_cx"].T + params["b_c"]
    W_ch = params["W_ch"]

    H = np.zeros((T + 1, q))
    # Cpad[K + t] holds c at step t; rows before K are the zero history.
    Cpad = np.zeros((T + K, q))
    Ig, Og, CT, TC = (np.zeros((T, q)) for _ in range(4))
    dMem = np.zeros((T, q))
    store = {"H": H, "Cpad": Cpad, "I": Ig, "O": Og, "CT": CT, "TC": TC, "dMem": dMem}

    if dynamic:
        W_d, b_d = params["W_d"], params["b_d"]
        D = np.zeros((T + 1, q))
        U = np.zeros((T, 2 * q + X.shape[1]))
        inside = np.zeros((T, q), dtype=bool)
        Wt = np.zeros((T, q, K))
        store.update(D=D, U=U, inside=inside, Wt=Wt)
    else:
        d = params.fixed_d()
        w_fixed, dw_fixed = frac_weight_table(d, K)
        store.update(d=d, w=w_fixed[:, 1:])

    for t in range(T):
        h = H[t]
        if dynamic:
            U[t] = np.concatenate([D[t], h, X[t]])
            D[t + 1], inside[t] = _gate(W_d @ U[t] + b_d)
            w, dw = frac_weight_table(D[t + 1], K)
            Wt[t] = w[:, 1:]
        else:
            w, dw = w_fixed, dw_fixed
        window = Cpad[t:t + K][::-1]
        memory = np.einsum("qk,kq->q", w[:, 1:], window)
        dMem[t] = np.einsum("qk,kq->q", dw[:, 1:], window)

        if const:
            Ig[t], Og[t] = i_c, o_c
        else:
            Ig[t] = expit(W_ih @ h + XI[t])
            Og[t] = expit(W_oh @ h + XO[t])
        CT[t] = activate(act, W_ch @ h + XC[t])
        Cpad[K + t] = -memory + Ig[t] * CT[t]
        TC[t] = activate(act, Cpad[K + t])
        H[t + 1] = Og[t] * TC[t]

    store["C"] = Cpad[K - 1:]
    return store


# =============================================================================
# Backward
# =============================================================================

def backward(params: CellParams, cache: StateCache, output_grads: np.ndarray) -> Gradients:
    """
    Exact BPTT gradients of the loss implied by output_grads (dL/dz per timestep).

    Gradients are exact for the model as truncated at K.

    Args:
        params: The parameters the cache was produced with
        cache: StateCache from forward
        output_grads: Shape (T, p_z)

    Returns:
        Dict of gradients, one entry per parameter, same shapes
    """
    if cache.kind != params.kind or cache.fingerprint != params.fingerprint():
        raise ContractError("cache was produced by a different set of parameters")
    G = np.asarray(output_grads, dtype=float)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape != cache.outputs.shape:
        raise ShapeError(f"output_grads must have shape {cache.outputs.shape}, got {G.shape}")

    if params.output_fn == "identity":
        gZ = G
    else:
        gZ = G * activation_grad(params.output_fn, cache.outputs)

    H = cache["H"]
    grads = {
        "W_zh": gZ.T @ H[1:],
        "b_z": gZ.sum(axis=0),
    }
    gH_out = gZ @ params["W_zh"]

    if params.kind == "rnn":
        grads.update(_backward_rnn_hidden(params, cache, gH_out))
    elif params.kind in ("mrnn", "mrnnf"):
        grads["W_zm"] = gZ.T @ cache["M"][1:]
        grads.update(_backward_mrnn(params, cache, gH_out, gZ @ params["W_zm"]))
    elif params.kind in ("lstm", "const-gates-lstm"):
        grads.update(_backward_lstm(params, cache, gH_out))
    else:
        grads.update(_backward_mlstm(params, cache, gH_out))
    return {name: grads[name] for name in params.weights}


def _backward_rnn_hidden(params: CellParams, cache: StateCache, gH_out: np.ndarray,
                         gH_extra: Optional[np.ndarray] = None) -> Gradients:
    """Gradients of the h-recurrence; gH_extra[t] is extra dL/dh_{t-1} arriving at step t."""
    H, X = cache["H"], cache.inputs
    T, q = X.shape[0], params.q
    W_hh_T = params["W_hh"].T
    gA = np.zeros((T, q))
    carry = np.zeros(q)
    for t in range(T - 1, -1, -1):
        gh = gH_out[t] + carry
        ga = gh * activation_grad(params.activation, H[t + 1])
        gA[t] = ga
        carry = W_hh_T @ ga
        if gH_extra is not None:
            carry = carry + gH_extra[t]
    return {"W_hh": gA.T @ H[:-1], "W_hx": gA.T @ X, "b_h": gA.sum(axis=0)}


def _backward_mrnn(params: CellParams, cache: StateCache, gH_out: np.ndarray,
                   gM_out: np.ndarray) -> Gradients:
    X, M, F, dF = cache.inputs, cache["M"], cache["F"], cache["dF"]
    T, px, q = X.shape[0], params.p_x, params.q
    W_m = params["W_m"]
    W_mm_T, W_mf_T = W_m[:, :q].T, W_m[:, q:].T
    dynamic = params.kind == "mrnn"

    gAM = np.zeros((T, q))
    gD_filter = np.zeros((T, px))
    gAD = np.zeros((T, px))
    gH_from_d = np.zeros((T, q))
    carry_m = np.zeros(q)
    carry_d = np.zeros(px)
    if dynamic:
        W_d_T = params["W_d"].T
        D, inside = cache["D"], cache["inside"]

    for t in range(T - 1, -1, -1):
        gm = gM_out[t] + carry_m
        gam = gm * activation_grad(params.activation, M[t + 1])
        gAM[t] = gam
        g_filter = (W_mf_T @ gam) * dF[t]
        carry_m = W_mm_T @ gam
        if dynamic:
            d = D[t + 1]
            gad = (g_filter + carry_d) * d * (1.0 - 2.0 * d) * inside[t]
            gAD[t] = gad
            gu = W_d_T @ gad
            carry_d = gu[:px]
            gH_from_d[t] = gu[px:px + q]
            carry_m = carry_m + gu[px + q:px + 2 * q]
        else:
            gD_filter[t] = g_filter

    grads = _backward_rnn_hidden(params, cache, gH_out, gH_from_d if dynamic else None)
    grads["W_m"] = gAM.T @ np.hstack([M[:-1], F])
    grads["b_m"] = gAM.sum(axis=0)
    if dynamic:
        grads["W_d"] = gAD.T @ cache["U"]
        grads["b_d"] = gAD.sum(axis=0)
    else:
        d = cache["d"]
        grads["theta_d"] = gD_filter.sum(axis=0) * d * (1.0 - 2.0 * d)
    return grads


def _backward_lstm(params: CellParams, cache: StateCache, gH_out: np.ndarray) -> Gradients:
    X, H, C = cache.inputs, cache["H"], cache["C"]
    Fg, Ig, Og, CT, TC = (cache[k] for k in ("F", "I", "O", "CT", "TC"))
    T, q = X.shape[0], params.q
    act = params.activation
    const = params.kind == "const-gates-lstm"
    W_ch_T = params["W_ch"].T
    if not const:
        W_fh_T, W_ih_T, W_oh_T = params["W_fh"].T, params["W_ih"].T, params["W_oh"].T

    gAF, gAI, gAO, gAC = (np.zeros((T, q)) for _ in range(4))
    carry_h = np.zeros(q)
    carry_c = np.zeros(q)
    for t in range(T - 1, -1, -1):
        gh = gH_out[t] + carry_h
        go = gh * TC[t]
        gc = carry_c + gh * Og[t] * activation_grad(act, TC[t])
        carry_c = gc * Fg[t]
        gAF[t] = gc * C[t] * Fg[t] * (1.0 - Fg[t])
        gAI[t] = gc * CT[t] * Ig[t] * (1.0 - Ig[t])
        gAO[t] = go * Og[t] * (1.0 - Og[t])
        gAC[t] = gc * Ig[t] * activation_grad(act, CT[t])
        carry_h = W_ch_T @ gAC[t]
        if not const:
            carry_h = carry_h + W_fh_T @ gAF[t] + W_ih_T @ gAI[t] + W_oh_T @ gAO[t]

    Hp = H[:-1]
    grads = {"W_ch": gAC.T @ Hp, "W_cy": gAC.T @ X, "b_c": gAC.sum(axis=0)}
    for gate, gA in (("f", gAF), ("i", gAI), ("o", gAO)):
        grads[f"b_{gate}"] = gA.sum(axis=0)
        if not const:
            grads[f"W_{gate}h"] = gA.T @ Hp
            grads[f"W_{gate}y"] = gA.T @ X
    return grads


def _backward_mlstm(params: CellParams, cache: StateCache, gH_out: np.ndarray) -> Gradients:
    X, H, Cpad = cache.inputs, cache["H"], cache["Cpad"]
    Ig, Og, CT, TC, dMem = (cache[k] for k in ("I", "O", "CT", "TC", "dMem"))
    T, q, K = X.shape[0], params.q, params.K
    act = params.activation
    const = params.kind == "const-gates-mlstm"
    dynamic = params.kind == "mlstm"
    W_ch_T = params["W_ch"].T
    if not const:
        W_ih_T, W_oh_T = params["W_ih"].T, params["W_oh"].T
    if dynamic:
        W_d_T = params["W_d"].T
        D, inside, Wt = cache["D"], cache["inside"], cache["Wt"]
    else:
        w_fixed = cache["w"]

    gC = np.zeros((T + K, q))
    gAI, gAO, gAC, gAD, gD_filter = (np.zeros((T, q)) for _ in range(5))
    carry_h = np.zeros(q)
    carry_d = np.zeros(q)
    for t in range(T - 1, -1, -1):
        gh = gH_out[t] + carry_h
        go = gh * TC[t]
        gc = gC[K + t] + gh * Og[t] * activation_grad(act, TC[t])
        w = Wt[t] if dynamic else w_fixed
        # c_t = -sum_j w_j c_{t-j} + ...; Cpad rows t..t+K-1 hold c_{t-K}..c_{t-1}.
        gC[t:t + K] -= (w * gc[:, None]).T[::-1]
        g_filter = -gc * dMem[t]

        gAI[t] = gc * CT[t] * Ig[t] * (1.0 - Ig[t])
        gAO[t] = go * Og[t] * (1.0 - Og[t])
        gAC[t] = gc * Ig[t] * activation_grad(act, CT[t])
        carry_h = W_ch_T @ gAC[t]
        if not const:
            carry_h = carry_h + W_ih_T @ gAI[t] + W_oh_T @ gAO[t]
        if dynamic:
            d = D[t + 1]
            gad = (g_filter + carry_d) * d * (1.0 - 2.0 * d) * inside[t]
            gAD[t] = gad
            gu = W_d_T @ gad
            carry_d = gu[:q]
            carry_h = carry_h + gu[q:2 * q]
        else:
            gD_filter[t] = g_filter

    Hp = H[:-1]
    grads = {"W_ch": gAC.T @ Hp, "W_cx": gAC.T @ X, "b_c": gAC.sum(axis=0),
             "b_i": gAI.sum(axis=0), "b_o": gAO.sum(axis=0)}
    if not const:
        grads.update(W_ih=gAI.T @ Hp, W_ix=gAI.T @ X, W_oh=gAO.T @ Hp, W_ox=gAO.T @ X)
    if dynamic:
        grads["W_d"] = gAD.T @ cache["U"]
        grads["b_d"] = gAD.sum(axis=0)
    else:
        d = cache["d"]
        grads["theta_d"] = gD_filter.sum(axis=0) * d * (1.0 - 2.0 * d)
    return grads


# =============================================================================
# Loss
# =============================================================================

def loss_mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """
    Mean over timesteps of the squared l2 error, and its gradient.

    Returns:
        (loss, 2 * (pred - target) / T)
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.ndim == 1:
        pred, target = pred[:, None], target[:, None]
    T = pred.shape[0]
    if T == 0:
        raise ShapeError("loss needs at least one timestep")
    diff = pred - target
    return float(np.sum(diff * diff) / T), 2.0 * diff / T
