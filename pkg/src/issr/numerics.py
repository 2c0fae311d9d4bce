"""Dense numeric kernels with reverse-mode gradients, Adam, and a
finite-difference gradient checker.

Everything the model computes flows through :class:`Tensor`, a thin wrapper
around a numpy array that records a backward closure per operation.  Calling
``backward()`` on a scalar result walks the recorded graph in reverse
topological order and accumulates gradients into every tensor created with
``requires_grad=True``.  Gradient accumulation order is fixed by construction
order, so repeated runs are bitwise identical.

Training normally runs in float32; gradient checks build the same graphs in
float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


class Tensor:
    """Array value plus the bookkeeping needed for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _accumulate(self, g):
        if self.grad is None:
            # Own the buffer: g may alias an upstream gradient or be a view.
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from a scalar output through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # Operator sugar; every op lives as a module-level function below.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data):
    """Wrap an array as a trainable tensor."""
    return Tensor(np.asarray(data), requires_grad=True)


def constant(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def _as_tensor(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _result(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _as_tensor(b, a)
    out_data = a.data + b.data
    out = [None]

    def backward():
        g = out[0].grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    out[0] = _result(out_data, (a, b), backward)
    return out[0]


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _as_tensor(b, a)
    out_data = a.data * b.data
    out = [None]

    def backward():
        g = out[0].grad
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    out[0] = _result(out_data, (a, b), backward)
    return out[0]


def matmul(a, b):
    """2-D matrix product with gradient contracts for both factors."""
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a))
    b = _as_tensor(b, a)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data
    out = [None]

    def backward():
        g = out[0].grad
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out[0] = _result(out_data, (a, b), backward)
    return out[0]


def transpose(a):
    out = [None]

    def backward():
        a._accumulate(out[0].grad.T)

    out[0] = _result(a.data.T.copy(), (a,), backward)
    return out[0]


def reshape(a, shape):
    out = [None]

    def backward():
        a._accumulate(out[0].grad.reshape(a.data.shape))

    out[0] = _result(a.data.reshape(shape).copy(), (a,), backward)
    return out[0]


def take(a, indices, axis=0):
    """Gather rows (or columns) by index; backward scatter-adds, so repeated
    indices accumulate."""
    indices = np.asarray(indices)
    out_data = np.take(a.data, indices, axis=axis)
    out = [None]

    def backward():
        g = out[0].grad
        ga = np.zeros_like(a.data)
        if axis == 0:
            np.add.at(ga, indices, g)
        else:
            np.add.at(ga, (slice(None),) * axis + (indices,), g)
        a._accumulate(ga)

    out[0] = _result(out_data, (a,), backward)
    return out[0]


def concat(parts, axis=-1):
    """Concatenate tensors; backward splits the gradient back apart."""
    parts = list(parts)
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([p.data.shape[axis] for p in parts])[:-1]
    out = [None]

    def backward():
        pieces = np.split(out[0].grad, offsets, axis=axis)
        for p, piece in zip(parts, pieces):
            if p.requires_grad:
                p._accumulate(piece)

    out[0] = _result(out_data, parts, backward)
    return out[0]


def tensor_sum(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    out = [None]

    def backward():
        g = out[0].grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=False))

    out[0] = _result(np.asarray(out_data), (a,), backward)
    return out[0]


def tensor_mean(a, axis=None, keepdims=False):
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.shape[axis]
    out = [None]

    def backward():
        g = out[0].grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        scaled = g / np.asarray(count, dtype=a.data.dtype)
        a._accumulate(np.broadcast_to(scaled, a.data.shape).astype(a.data.dtype, copy=False))

    out[0] = _result(np.asarray(out_data), (a,), backward)
    return out[0]


def relu(a):
    out = [None]

    def backward():
        a._accumulate(out[0].grad * (a.data > 0))

    out[0] = _result(np.maximum(a.data, 0), (a,), backward)
    return out[0]


def tanh(a):
    y = np.tanh(a.data)
    out = [None]

    def backward():
        a._accumulate(out[0].grad * (1.0 - y * y))

    out[0] = _result(y, (a,), backward)
    return out[0]


def sigmoid(a):
    # Split by sign to stay stable for large |x|.
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    y = y.astype(x.dtype, copy=False)
    out = [None]

    def backward():
        a._accumulate(out[0].grad * (y * (1.0 - y)).astype(x.dtype, copy=False))

    out[0] = _result(y, (a,), backward)
    return out[0]


def log(a):
    out = [None]

    def backward():
        a._accumulate(out[0].grad / a.data)

    out[0] = _result(np.log(a.data), (a,), backward)
    return out[0]


def clip(a, lo, hi):
    """Clamp values; gradient passes through strictly inside the bounds."""
    mask = (a.data > lo) & (a.data < hi)
    out = [None]

    def backward():
        a._accumulate(out[0].grad * mask)

    out[0] = _result(np.clip(a.data, lo, hi), (a,), backward)
    return out[0]


def softmax(a, axis=-1):
    """Numerically stable softmax along an axis."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = [None]

    def backward():
        g = out[0].grad
        dot_term = (g * y).sum(axis=axis, keepdims=True)
        a._accumulate((y * (g - dot_term)).astype(a.data.dtype, copy=False))

    out[0] = _result(y, (a,), backward)
    return out[0]


def activation(a, kind):
    """Dispatch on activation name; 'identity' passes through."""
    if kind == "relu":
        return relu(a)
    if kind == "tanh":
        return tanh(a)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "identity":
        return a
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def affine(weight, x, bias=None):
    """``x @ weight.T + bias`` for a (out, in) weight; accepts a single vector
    or a batch of row vectors."""
    single = x.data.ndim == 1
    if single:
        x = reshape(x, (1, x.data.shape[0]))
    y = matmul(x, transpose(weight))
    if bias is not None:
        y = add(y, bias)
    if single:
        y = reshape(y, (y.data.shape[1],))
    return y


def mean_pool(vectors):
    """Arithmetic mean of a list of equally shaped vectors."""
    rows = [reshape(v, (1,) + v.data.shape) for v in vectors]
    return tensor_mean(concat(rows, axis=0), axis=0)


def dot(a, b):
    """Inner product of two vectors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"dot shape mismatch: {a.data.shape} vs {b.data.shape}")
    return tensor_sum(mul(a, b))


def assert_finite(a, context=""):
    if not np.all(np.isfinite(a.data if isinstance(a, Tensor) else a)):
        raise FloatingPointError(f"non-finite values detected {context}".strip())


def grad_check(fn, inputs, eps=1e-5):
    """Max relative error between analytic gradients and central differences.

    ``fn`` maps one float64 tensor per input to a scalar tensor and must be
    deterministic across calls (pin any sampling internally).  Relative error
    per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    base = [np.asarray(x, dtype=np.float64) for x in inputs]

    def evaluate(arrays, grad_index=None):
        tensors = [
            Tensor(arr.copy(), requires_grad=(grad_index is None)) for arr in arrays
        ]
        out = fn(*tensors)
        if grad_index is None:
            out.backward()
            return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
        return float(out.data)

    analytic = evaluate(base)
    worst = 0.0
    for i, arr in enumerate(base):
        flat_grad = analytic[i].ravel()
        for j in range(arr.size):
            bumped = [a.copy() for a in base]
            bumped[i].flat[j] += eps
            f_plus = evaluate(bumped, grad_index=i)
            bumped[i].flat[j] -= 2 * eps
            f_minus = evaluate(bumped, grad_index=i)
            numeric = (f_plus - f_minus) / (2 * eps)
            a = flat_grad[j]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
    return worst


@dataclass
class AdamState:
    """Per-parameter moment accumulators plus the shared hyperparameters."""

    first_moment: list
    second_moment: list
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(cls, params, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            step_count=0,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place; returns (params, state).

    Scalar factors are cast to the parameter dtype so float32 training stays
    bitwise reproducible.
    """
    state.step_count += 1
    t = state.step_count
    for i, (p, g) in enumerate(zip(params, grads)):
        dt = p.dtype.type
        if g is None:
            g = np.zeros_like(p)
        b1 = dt(state.beta1)
        b2 = dt(state.beta2)
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (dt(1.0) - b1) * g
        v *= b2
        v += (dt(1.0) - b2) * (g * g)
        m_hat = m / dt(1.0 - state.beta1 ** t)
        v_hat = v / dt(1.0 - state.beta2 ** t)
        p -= dt(state.learning_rate) * m_hat / (np.sqrt(v_hat) + dt(state.epsilon))
    return params, state


class AdamOptimizer:
    """Adam over an ordered name->Tensor mapping of trainable parameters."""

    def __init__(self, named_params, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.names = list(named_params)
        self.params = [named_params[name] for name in self.names]
        self.state = AdamState.initial(
            [p.data for p in self.params], learning_rate, beta1, beta2, epsilon
        )

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)


# --- flat binary tensor format: magic, version, dtype code, shape, raw values ---

_TENSOR_MAGIC = b"ISTN"
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def write_array(f, arr):
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_CODES[np.dtype(arr.dtype.str.replace(">", "<"))]
    f.write(_TENSOR_MAGIC)
    f.write(struct.pack("<BBH", 1, code, arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    f.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def read_array(f):
    magic = f.read(4)
    if magic != _TENSOR_MAGIC:
        raise ValueError("not a tensor record")
    version, code, ndim = struct.unpack("<BBH", f.read(4))
    if version != 1:
        raise ValueError(f"unsupported tensor format version {version}")
    shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim)) if ndim else ()
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype)
    return data.reshape(shape).copy()


def save_tensor(path, arr):
    with open(path, "wb") as f:
        write_array(f, arr)


def load_tensor(path):
    with open(path, "rb") as f:
        return read_array(f)
