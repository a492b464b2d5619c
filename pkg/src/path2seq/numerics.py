"""Dense 64-bit tensor math with reverse-mode gradients.

Forward ops build an implicit graph of `Tensor` nodes; `backward` walks it
once in reverse topological order. Gradients of a single backward call are
accumulated locally and then added into each `Parameter.grad`, so calling
backward twice on the same graph doubles parameter gradients exactly;
`zero_grads` resets them.

Everything computes and accumulates in float64. Set `DEBUG = True` to make
every op assert its output is finite.
"""

from __future__ import annotations

import numpy as np

from .errors import Path2SeqError

DEBUG = False


class ShapeMismatch(Path2SeqError):
    kind = "shape-mismatch"


class EmptySequence(Path2SeqError):
    kind = "empty-sequence"


class InvalidIndex(Path2SeqError):
    kind = "invalid-index"


class NumericDivergence(Path2SeqError):
    kind = "numeric-divergence"


def _check(data: np.ndarray):
    if DEBUG and not np.all(np.isfinite(data)):
        raise NumericDivergence("non-finite value in tensor")


class Tensor:
    """A node in the computation graph. `data` is a row-major float64 array;
    `_bw(g)` yields (parent, gradient contribution) pairs."""

    __slots__ = ("data", "_parents", "_bw")

    def __init__(self, data, parents=(), bw=None):
        # asarray keeps 0-d losses 0-d; ascontiguousarray would promote them
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self._parents = parents
        self._bw = bw
        _check(self.data)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """A learned leaf tensor with persistent gradient and momentum buffers,
    all sharing one shape."""

    __slots__ = ("name", "grad", "momentum")

    def __init__(self, data, name: str):
        super().__init__(data)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.momentum = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def constant(data) -> Tensor:
    return Tensor(data)


def _need(cond: bool, msg: str):
    if not cond:
        raise ShapeMismatch(msg)


# --- elementwise and linear ops ---

def add(a: Tensor, b: Tensor) -> Tensor:
    _need(a.shape == b.shape, f"add {a.shape} vs {b.shape}")
    return Tensor(a.data + b.data, (a, b), lambda g: ((a, g), (b, g)))


def add_bias(m: Tensor, bias: Tensor) -> Tensor:
    # (n, h) + (h,) with the bias gradient summed over rows
    _need(m.data.ndim == 2 and bias.data.ndim == 1 and m.shape[1] == bias.shape[0],
          f"add_bias {m.shape} vs {bias.shape}")
    return Tensor(m.data + bias.data, (m, bias),
                  lambda g: ((m, g), (bias, g.sum(axis=0))))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _need(a.shape == b.shape, f"mul {a.shape} vs {b.shape}")
    return Tensor(a.data * b.data, (a, b),
                  lambda g: ((a, g * b.data), (b, g * a.data)))


def mul_const(a: Tensor, factor: np.ndarray | float) -> Tensor:
    factor = np.asarray(factor, dtype=np.float64)
    return Tensor(a.data * factor, (a,), lambda g: ((a, g * factor),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    if DEBUG:
        assert np.all(np.abs(out) <= 1.0)
    return Tensor(out, (a,), lambda g: ((a, g * (1.0 - out * out)),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return Tensor(out, (a,), lambda g: ((a, g * out * (1.0 - out)),))


def mm(a: Tensor, b: Tensor) -> Tensor:
    _need(a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0],
          f"mm {a.shape} @ {b.shape}")
    return Tensor(a.data @ b.data, (a, b),
                  lambda g: ((a, g @ b.data.T), (b, a.data.T @ g)))


def mv(a: Tensor, x: Tensor) -> Tensor:
    # (m, n) @ (n,) -> (m,)
    _need(a.data.ndim == 2 and x.data.ndim == 1 and a.shape[1] == x.shape[0],
          f"mv {a.shape} @ {x.shape}")
    return Tensor(a.data @ x.data, (a, x),
                  lambda g: ((a, np.outer(g, x.data)), (x, a.data.T @ g)))


def vm(x: Tensor, a: Tensor) -> Tensor:
    # (m,) @ (m, n) -> (n,)
    _need(x.data.ndim == 1 and a.data.ndim == 2 and x.shape[0] == a.shape[0],
          f"vm {x.shape} @ {a.shape}")
    return Tensor(x.data @ a.data, (x, a),
                  lambda g: ((x, a.data @ g), (a, np.outer(x.data, g))))


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    _need(len(parts) > 0, "concat of nothing")
    sizes = [p.shape[axis if axis >= 0 else p.data.ndim + axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(zip(parts, np.split(g, bounds, axis=axis)))

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def pad_tail(x: Tensor, width: int) -> Tensor:
    # zero-extend a vector; used to widen a start state to a larger cell
    _need(x.data.ndim == 1 and width >= x.shape[0], f"pad_tail {x.shape} to {width}")
    n = x.shape[0]
    out = np.zeros(width)
    out[:n] = x.data
    return Tensor(out, (x,), lambda g: ((x, g[:n]),))


def sum_rows(m: Tensor) -> Tensor:
    _need(m.data.ndim == 2, f"sum_rows on {m.shape}")
    return Tensor(m.data.sum(axis=0), (m,),
                  lambda g: ((m, np.broadcast_to(g, m.shape).copy()),))


def mean_rows(m: Tensor) -> Tensor:
    _need(m.data.ndim == 2, f"mean_rows on {m.shape}")
    n = m.shape[0]
    return Tensor(m.data.mean(axis=0), (m,),
                  lambda g: ((m, np.broadcast_to(g / n, m.shape).copy()),))


def mean_of(items: list[Tensor]) -> Tensor:
    _need(len(items) > 0, "mean of nothing")
    n = len(items)
    total = sum(t.data for t in items) / n

    def bw(g):
        return tuple((t, g / n) for t in items)

    return Tensor(total, tuple(items), bw)


def lerp_mask(mask: np.ndarray, when_on: Tensor, when_off: Tensor) -> Tensor:
    # out = mask*on + (1-mask)*off with a constant 0/1 mask
    _need(when_on.shape == when_off.shape, f"lerp {when_on.shape} vs {when_off.shape}")
    mask = np.asarray(mask, dtype=np.float64)
    return Tensor(mask * when_on.data + (1.0 - mask) * when_off.data,
                  (when_on, when_off),
                  lambda g: ((when_on, g * mask), (when_off, g * (1.0 - mask))))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)

    def bw(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, ids, g)
        return ((table, acc),)

    return Tensor(table.data[ids], (table,), bw)


def embedding_bag_sum(table: Tensor, flat_ids: np.ndarray, row_starts: np.ndarray) -> Tensor:
    """Sum of embedding rows per segment: segment r covers
    flat_ids[row_starts[r]:row_starts[r+1]] and every segment is non-empty."""
    flat_ids = np.asarray(flat_ids, dtype=np.intp)
    row_starts = np.asarray(row_starts, dtype=np.intp)
    n_rows = len(row_starts) - 1
    counts = np.diff(row_starts)
    _need(np.all(counts > 0), "empty embedding bag segment")
    rows = table.data[flat_ids]
    out = np.add.reduceat(rows, row_starts[:-1], axis=0)
    scatter = np.repeat(np.arange(n_rows), counts)

    def bw(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, flat_ids, g[scatter])
        return ((table, acc),)

    return Tensor(out, (table,), bw)


# --- probability ops ---

def softmax(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain-array softmax with max subtraction; sums to 1 along `axis`."""
    values = np.asarray(values, dtype=np.float64)
    shifted = values - values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_1d(scores: Tensor) -> Tensor:
    _need(scores.data.ndim == 1, f"softmax_1d on {scores.shape}")
    out = softmax(scores.data)
    if DEBUG:
        assert abs(out.sum() - 1.0) < 1e-12

    def bw(g):
        return ((scores, out * (g - np.dot(g, out))),)

    return Tensor(out, (scores,), bw)


def mask_scores(scores: Tensor, mask: np.ndarray) -> Tensor:
    """Push masked-out entries to a huge negative value so softmax ignores
    them; gradient flows only to the kept entries."""
    mask = np.asarray(mask, dtype=bool)
    _need(scores.data.ndim == 1 and mask.shape == scores.shape,
          f"mask {mask.shape} on {scores.shape}")
    out = np.where(mask, scores.data, -1e30)
    keep = mask.astype(np.float64)
    return Tensor(out, (scores,), lambda g: ((scores, g * keep),))


def cross_entropy(dist: Tensor, true_index: int) -> Tensor:
    """-ln p[true_index] of a 1-d distribution."""
    _need(dist.data.ndim == 1, f"cross_entropy on {dist.shape}")
    if not 0 <= true_index < dist.shape[0]:
        raise InvalidIndex(f"class index {true_index} outside [0, {dist.shape[0]})")
    p = dist.data[true_index]

    def bw(g):
        acc = np.zeros_like(dist.data)
        acc[true_index] = -g / p
        return ((dist, acc),)

    return Tensor(-np.log(p), (dist,), bw)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero with probability `rate` and scale survivors by
    1/(1-rate) while training; identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul_const(x, keep)


# --- backward pass ---

def backward(loss: Tensor, seed: float = 1.0):
    """Accumulate d(loss)/d(parameter) into every reachable Parameter.grad.

    `loss` must be scalar. Per-call gradients are kept in a local table, so
    repeated calls without `zero_grads` add up (two calls double exactly).
    """
    _need(loss.data.ndim == 0 or loss.data.size == 1, "backward needs a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        stack.append((tensor, True))
        for parent in tensor._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    local: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=np.float64)}
    for tensor in reversed(order):
        g = local.pop(id(tensor), None)
        if g is None:
            continue
        _check(g)
        if isinstance(tensor, Parameter):
            tensor.grad += g
            continue
        if tensor._bw is None:
            continue
        for parent, contribution in tensor._bw(g):
            slot = local.get(id(parent))
            if slot is None:
                local[id(parent)] = np.array(contribution, dtype=np.float64, copy=True)
            else:
                slot += contribution


def zero_grads(params):
    for p in params:
        p.grad[...] = 0.0


# --- initialization ---

def glorot_uniform_init(shape, rng: np.random.Generator) -> np.ndarray:
    """Uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out)); fans are the
    first and last dims for matrices and both equal the size for vectors."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ValueError("need at least one dimension")
    fan_sum = 2 * shape[0] if len(shape) == 1 else shape[0] + shape[-1]
    limit = np.sqrt(6.0 / fan_sum)
    return rng.uniform(-limit, limit, size=shape)


# --- LSTM cells ---

class LstmCellParams:
    """Gate weights over the concatenated [input; hidden] vector: one
    (input+hidden, hidden) matrix and one bias per gate. The forget bias
    starts at 1.0 so early training does not flush the cell state."""

    GATES = ("input", "forget", "output", "candidate")

    def __init__(self, input_size: int, hidden_size: int, name: str,
                 rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.name = name
        self.weights = {}
        self.biases = {}
        for gate in self.GATES:
            w = glorot_uniform_init((input_size + hidden_size, hidden_size), rng)
            self.weights[gate] = Parameter(w, f"{name}/W_{gate}")
            bias = np.ones(hidden_size) if gate == "forget" else np.zeros(hidden_size)
            self.biases[gate] = Parameter(bias, f"{name}/b_{gate}")

    def parameters(self) -> list[Parameter]:
        return [self.weights[g] for g in self.GATES] + [self.biases[g] for g in self.GATES]


def lstm_step(cell: LstmCellParams, x_t: Tensor, h_prev: Tensor, c_prev: Tensor,
              recurrent_mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """One step over a row batch: x_t (n, in), h/c (n, hidden).

    `recurrent_mask` is a dropout mask multiplied into h_prev before the
    gates; it must stay fixed across the timesteps of one sequence and is
    all-ones (None) at inference.
    """
    _need(x_t.data.ndim == 2 and x_t.shape[1] == cell.input_size,
          f"lstm x {x_t.shape}, expected (n, {cell.input_size})")
    _need(h_prev.shape == c_prev.shape == (x_t.shape[0], cell.hidden_size),
          f"lstm state {h_prev.shape}, expected ({x_t.shape[0]}, {cell.hidden_size})")
    h_in = h_prev if recurrent_mask is None else mul_const(h_prev, recurrent_mask)
    joint = concat([x_t, h_in], axis=1)
    gate_i = sigmoid(add_bias(mm(joint, cell.weights["input"]), cell.biases["input"]))
    gate_f = sigmoid(add_bias(mm(joint, cell.weights["forget"]), cell.biases["forget"]))
    gate_o = sigmoid(add_bias(mm(joint, cell.weights["output"]), cell.biases["output"]))
    cand = tanh(add_bias(mm(joint, cell.weights["candidate"]), cell.biases["candidate"]))
    c_t = add(mul(gate_f, c_prev), mul(gate_i, cand))
    h_t = mul(gate_o, tanh(c_t))
    return h_t, c_t


def lstm_final_state(cell: LstmCellParams, inputs: list[Tensor],
                     step_masks: list[np.ndarray] | None = None,
                     recurrent_mask: np.ndarray | None = None) -> Tensor:
    """Run a row batch through the cell and return the last valid hidden
    state per row. `step_masks[t]` is an (n, 1) 0/1 array: rows whose
    sequence already ended carry their previous state forward."""
    if not inputs:
        raise EmptySequence("lstm over an empty sequence")
    n = inputs[0].shape[0]
    h = constant(np.zeros((n, cell.hidden_size)))
    c = constant(np.zeros((n, cell.hidden_size)))
    for t, x_t in enumerate(inputs):
        h_new, c_new = lstm_step(cell, x_t, h, c, recurrent_mask)
        if step_masks is not None:
            h = lerp_mask(step_masks[t], h_new, h)
            c = lerp_mask(step_masks[t], c_new, c)
        else:
            h, c = h_new, c_new
    return h


def bilstm_final_states(cell_fwd: LstmCellParams, cell_bwd: LstmCellParams,
                        sequence: list[Tensor]) -> Tensor:
    """[forward final state ; backward final state] of one sequence of
    input vectors, length 2 * hidden."""
    if not sequence:
        raise EmptySequence("bilstm over an empty sequence")
    rows = [Tensor(x.data.reshape(1, -1), (x,), (lambda xx: lambda g: ((xx, g[0]),))(x))
            for x in sequence]
    h_fwd = lstm_final_state(cell_fwd, rows)
    h_bwd = lstm_final_state(cell_bwd, list(reversed(rows)))
    out2d = concat([h_fwd, h_bwd], axis=1)
    return Tensor(out2d.data[0], (out2d,), lambda g: ((out2d, g.reshape(1, -1)),))


# --- optimizer ---

def nesterov_update(param: Parameter, lr: float, mu: float = 0.95):
    """Momentum step in the look-ahead form

        buf <- mu * buf - lr * grad
        theta <- theta + mu * buf - lr * grad

    where the second line already uses the updated buffer. mu = 0 reduces to
    plain SGD.
    """
    buf = param.momentum
    buf *= mu
    buf -= lr * param.grad
    param.data += mu * buf - lr * param.grad
    _check(param.data)
