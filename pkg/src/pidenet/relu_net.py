"""Explicit ReLU networks: evaluation, size accounting and the network calculus.

A network is a stack of affine layers ``W_l(x) = A_l x + b_l`` with a ReLU
between consecutive layers and none after the last one.  Weights are kept
in CSR form because assembled estimator networks are block-diagonal
stacks of many small subnetworks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

# rows * width budget per evaluation chunk
_EVAL_BUDGET = 4_000_000


def _as_csr(a) -> sp.csr_matrix:
    if sp.issparse(a):
        m = sp.csr_matrix(a, dtype=np.float64)
    else:
        m = sp.csr_matrix(np.atleast_2d(np.asarray(a, dtype=np.float64)))
    m.sort_indices()
    return m


@dataclass(frozen=True, eq=False)
class AffineLayer:
    weights: sp.csr_matrix
    bias: np.ndarray

    def __post_init__(self):
        w = _as_csr(self.weights)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1).copy()
        if b.shape[0] != w.shape[0]:
            raise ValueError(f"bias length {b.shape[0]} != weight rows {w.shape[0]}")
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights.data)) + int(np.count_nonzero(self.bias))

    def weight_nnz(self) -> int:
        return int(np.count_nonzero(self.weights.data))

    def apply(self, h: np.ndarray) -> np.ndarray:
        # h: (n, n_in) -> (n, n_out)
        return np.asarray(self.weights @ h.T).T + self.bias


@dataclass(frozen=True, eq=False)
class ReluNet:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.n_in != prev.n_out:
                raise ValueError(
                    f"layer shapes do not chain: {prev.n_out} outputs feed {nxt.n_in} inputs"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def max_width(self) -> int:
        return max(layer.n_out for layer in self.layers)

    def size(self) -> int:
        return size(self)

    def is_constant(self) -> bool:
        """True when the first layer ignores its input, so the net is a constant map."""
        return self.layers[0].weight_nnz() == 0

    def __call__(self, x) -> np.ndarray:
        return eval_net(self, x)

    def __repr__(self) -> str:
        widths = [self.input_dim] + [layer.n_out for layer in self.layers]
        return f"ReluNet(widths={widths}, size={self.size()})"


@dataclass(frozen=True)
class SizeReport:
    actual: int
    bound: float
    label: str = ""

    @property
    def satisfied(self) -> bool:
        return self.actual <= self.bound


def eval_net(net: ReluNet, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector or on a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x.reshape(1, -1) if single else x
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ValueError(f"expected input of dimension {net.input_dim}, got shape {x.shape}")
    n = h.shape[0]
    chunk = max(1, _EVAL_BUDGET // max(1, net.max_width))
    if n <= chunk:
        out = _forward(net, h)
    else:
        out = np.vstack([_forward(net, h[i:i + chunk]) for i in range(0, n, chunk)])
    return out[0] if single else out


def _forward(net: ReluNet, h: np.ndarray) -> np.ndarray:
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        h = layer.apply(h)
        if i < last:
            np.maximum(h, 0.0, out=h)
    return h


def size(net: ReluNet) -> int:
    """Total count of nonzero weight and bias entries (exact comparison with 0.0)."""
    return sum(layer.nnz() for layer in net.layers)


# ---------------------------------------------------------------- constructors

def affine_net(weights, bias=None) -> ReluNet:
    w = _as_csr(weights)
    b = np.zeros(w.shape[0]) if bias is None else bias
    return ReluNet((AffineLayer(w, b),))


def identity_net(d: int, bias=None) -> ReluNet:
    if d < 1:
        raise ValueError("identity_net needs d >= 1")
    b = np.zeros(d) if bias is None else np.asarray(bias, dtype=np.float64)
    if b.shape != (d,):
        raise ValueError(f"bias must have shape ({d},)")
    return affine_net(sp.identity(d, format="csr"), b)


def constant_net(input_dim: int, value) -> ReluNet:
    value = np.atleast_1d(np.asarray(value, dtype=np.float64))
    return affine_net(sp.csr_matrix((value.shape[0], input_dim)), value)


def zero_net(input_dim: int, output_dim: int) -> ReluNet:
    return constant_net(input_dim, np.zeros(output_dim))


def from_dense(weights: Sequence, biases: Sequence) -> ReluNet:
    if len(weights) != len(biases):
        raise ValueError("need one bias per weight matrix")
    return ReluNet(tuple(AffineLayer(w, b) for w, b in zip(weights, biases)))


def random_net(rng: np.random.Generator, widths: Sequence[int], density: float = 1.0) -> ReluNet:
    """Random dense-ish net with the given widths (input first), for tests and demos."""
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        w = rng.standard_normal((n_out, n_in))
        b = rng.standard_normal(n_out)
        if density < 1.0:
            w[rng.random(w.shape) > density] = 0.0
            b[rng.random(b.shape) > density] = 0.0
        layers.append(AffineLayer(w, b))
    return ReluNet(tuple(layers))


# ---------------------------------------------------------------- calculus

def precompose_affine(net: ReluNet, A, b) -> ReluNet:
    """Return x -> net(A x + b), folding the affine map into the first layer."""
    A = _as_csr(A)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if A.shape[0] != net.input_dim or b.shape[0] != net.input_dim:
        raise ValueError("affine map does not match the network input")
    first = net.layers[0]
    folded = AffineLayer(first.weights @ A, first.weights @ b + first.bias)
    return ReluNet((folded,) + net.layers[1:])


def _junction(outer: ReluNet, inner: ReluNet) -> ReluNet:
    # y = rho(y) - rho(-y) at the seam keeps both halves valid ReLU stacks
    last, first = inner.layers[-1], outer.layers[0]
    split = AffineLayer(sp.vstack([last.weights, -last.weights], format="csr"),
                        np.concatenate([last.bias, -last.bias]))
    merge = AffineLayer(sp.hstack([first.weights, -first.weights], format="csr"), first.bias)
    return ReluNet(inner.layers[:-1] + (split, merge) + outer.layers[1:])


def _fold(outer_layer: AffineLayer, inner_layer: AffineLayer) -> AffineLayer:
    return AffineLayer(outer_layer.weights @ inner_layer.weights,
                       outer_layer.weights @ inner_layer.bias + outer_layer.bias)


def compose(outer: ReluNet, inner: ReluNet) -> ReluNet:
    """Network for ``x -> outer(inner(x))`` with size at most ``2 size(outer) + 2 size(inner)``.

    The generic construction splits the seam signal as ``rho(y) - rho(-y)``.
    When one side is a single affine layer the maps are multiplied out
    instead, but only if that is not larger than the seam construction.
    """
    if inner.output_dim != outer.input_dim:
        raise ValueError(
            f"cannot compose: inner outputs {inner.output_dim}, outer expects {outer.input_dim}"
        )
    if outer.is_constant():
        first = outer.layers[0]
        blank = AffineLayer(sp.csr_matrix((first.n_out, inner.input_dim)), first.bias)
        return ReluNet((blank,) + outer.layers[1:])
    if inner.is_constant():
        value = eval_net(outer, eval_net(inner, np.zeros(inner.input_dim)))
        return constant_net(inner.input_dim, value)

    candidates = [_junction(outer, inner)]
    if outer.depth == 1:
        candidates.append(ReluNet(inner.layers[:-1] + (_fold(outer.layers[0], inner.layers[-1]),)))
    elif inner.depth == 1:
        candidates.append(ReluNet((_fold(outer.layers[0], inner.layers[0]),) + outer.layers[1:]))
    return min(candidates, key=lambda net: (net.size(), net.depth))


def _carry_layers(layer: AffineLayer, extra: int) -> tuple[list[AffineLayer], sp.csr_matrix]:
    """Turn a final layer into ``extra`` more ReLU layers that carry its value.

    Returns the replacement layers and the matrix that reads the carried
    value back out of the last of them.
    """
    w = layer.n_out
    layers = [AffineLayer(sp.vstack([layer.weights, -layer.weights], format="csr"),
                          np.concatenate([layer.bias, -layer.bias]))]
    for _ in range(extra - 1):
        layers.append(AffineLayer(sp.identity(2 * w, format="csr"), np.zeros(2 * w)))
    eye = sp.identity(w, format="csr")
    return layers, sp.hstack([eye, -eye], format="csr")


def linear_combine(nets: Sequence[ReluNet], coeffs: Sequence[float]) -> ReluNet:
    """Network for ``x -> sum_i coeffs[i] * nets[i](x)``.

    Subnetworks run in parallel and are merged in one output layer with the
    coefficients folded into it.  Constant members collapse into the output
    bias and single-layer members are summed into one affine term.  Members
    shallower than the deepest one are padded by carrying their output
    through extra ReLU layers as ``rho(y), rho(-y)``; that padding is the
    only source of size beyond the sum of member sizes.
    """
    nets = list(nets)
    coeffs = [float(a) for a in coeffs]
    if not nets:
        raise ValueError("linear_combine needs at least one network")
    if len(coeffs) != len(nets):
        raise ValueError("need one coefficient per network")
    n_in, n_out = nets[0].input_dim, nets[0].output_dim
    for net in nets:
        if net.input_dim != n_in or net.output_dim != n_out:
            raise ValueError("all networks must share input and output dimensions")

    out_bias = np.zeros(n_out)
    aff_w = sp.csr_matrix((n_out, n_in))
    has_affine = False
    deep = []
    for a, net in zip(coeffs, nets):
        if a == 0.0:
            continue
        if net.is_constant():
            out_bias = out_bias + a * eval_net(net, np.zeros(n_in))
        elif net.depth == 1:
            aff_w = aff_w + a * net.layers[0].weights
            out_bias = out_bias + a * net.layers[0].bias
            has_affine = True
        else:
            deep.append((a, net))

    if not deep:
        return ReluNet((AffineLayer(aff_w, out_bias),))

    depth = max(net.depth for _, net in deep)
    columns = []  # per member: list of (depth - 1) hidden layers, plus its output block
    for a, net in deep:
        if net.depth == depth:
            hidden = list(net.layers[:-1])
            last = net.layers[-1]
            columns.append((hidden, a * last.weights))
            out_bias = out_bias + a * last.bias
        else:
            carried, reader = _carry_layers(net.layers[-1], depth - net.depth)
            columns.append((list(net.layers[:-1]) + carried, a * reader))
    if has_affine and aff_w.count_nonzero() > 0:
        carried, reader = _carry_layers(AffineLayer(aff_w, np.zeros(n_out)), depth - 1)
        columns.append((carried, reader))

    layers = []
    for level in range(depth - 1):
        blocks = [hidden[level] for hidden, _ in columns]
        if level == 0:
            w = sp.vstack([blk.weights for blk in blocks], format="csr")
        else:
            w = sp.block_diag([blk.weights for blk in blocks], format="csr")
        layers.append(AffineLayer(w, np.concatenate([blk.bias for blk in blocks])))
    w_out = sp.hstack([reader for _, reader in columns], format="csr")
    layers.append(AffineLayer(w_out, out_bias))
    return ReluNet(tuple(layers))


def combine_padding_allowance(nets: Sequence[ReluNet]) -> int:
    """Upper bound on the size linear_combine adds beyond the member sizes.

    Each member shallower than the deepest one pays for doubling its last
    layer plus ``2 * output_dim`` per carried level and in the read-out.
    The merged output layer itself costs at most ``output_dim`` extra.
    """
    nets = list(nets)
    depth = max(net.depth for net in nets)
    w = nets[0].output_dim
    extra = w
    if depth > 1:
        for net in nets:
            if net.depth < depth and not net.is_constant():
                gap = depth - net.depth
                extra += net.layers[-1].nnz() + 2 * w * gap
    return extra


# ---------------------------------------------------------------- (t, x) inputs

@dataclass(frozen=True)
class PairInputNet:
    """View of a net on ``R^{1+d}`` as a function of a time ``t`` and a state ``x``."""

    net: ReluNet

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    @property
    def state_dim(self) -> int:
        return self.net.input_dim - 1

    def __call__(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return eval_net(self.net, np.concatenate([[float(t)], x]))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        return eval_net(self.net, np.column_stack([t, x]))

    def slice(self, t: float) -> ReluNet:
        """ReLU net of ``x`` alone with the time fixed to ``t``."""
        d = self.state_dim
        A = sp.vstack([sp.csr_matrix((1, d)), sp.identity(d, format="csr")], format="csr")
        b = np.zeros(d + 1)
        b[0] = t
        return precompose_affine(self.net, A, b)


def pair_input_net(net: ReluNet) -> PairInputNet:
    if net.input_dim < 2:
        raise ValueError("a (t, x) network needs input dimension at least 2")
    return PairInputNet(net)


def lift_time(net: ReluNet) -> ReluNet:
    """Net of ``(t, x)`` that ignores ``t``; the extra column is a structural zero."""
    first = net.layers[0]
    w = sp.hstack([sp.csr_matrix((first.n_out, 1)), first.weights], format="csr")
    return ReluNet((AffineLayer(w, first.bias),) + net.layers[1:])


# ---------------------------------------------------------------- serialization

_MAGIC = "pidenet-relu-net 1"


def dumps(net: ReluNet) -> str:
    """Text encoding with hex floats; nonzero weights listed in row-major order.

    Layout::

        pidenet-relu-net 1
        layers <L>
        layer <rows> <cols> <nnz>
        <row> <col> <hex value>      (nnz lines)
        bias <nnz>
        <index> <hex value>          (nnz lines)
    """
    lines = [_MAGIC, f"layers {net.depth}"]
    for layer in net.layers:
        coo = layer.weights.tocoo()
        keep = coo.data != 0.0
        rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
        order = np.lexsort((cols, rows))
        lines.append(f"layer {layer.n_out} {layer.n_in} {len(order)}")
        lines.extend(f"{rows[i]} {cols[i]} {float(vals[i]).hex()}" for i in order)
        nz = np.flatnonzero(layer.bias)
        lines.append(f"bias {len(nz)}")
        lines.extend(f"{i} {float(layer.bias[i]).hex()}" for i in nz)
    return "\n".join(lines) + "\n"


def loads(text: str) -> ReluNet:
    it = iter(text.splitlines())
    if next(it, None) != _MAGIC:
        raise ValueError("not a serialized ReluNet")
    head = next(it).split()
    n_layers = int(head[1])
    layers = []
    for _ in range(n_layers):
        _, rows, cols, nnz = next(it).split()
        rows, cols, nnz = int(rows), int(cols), int(nnz)
        r = np.empty(nnz, dtype=np.int64)
        c = np.empty(nnz, dtype=np.int64)
        v = np.empty(nnz)
        for k in range(nnz):
            a, b, h = next(it).split()
            r[k], c[k], v[k] = int(a), int(b), float.fromhex(h)
        w = sp.csr_matrix((v, (r, c)), shape=(rows, cols))
        bias = np.zeros(rows)
        n_b = int(next(it).split()[1])
        for _ in range(n_b):
            i, h = next(it).split()
            bias[int(i)] = float.fromhex(h)
        layers.append(AffineLayer(w, bias))
    return ReluNet(tuple(layers))


def save(net: ReluNet, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(net))


def load(path) -> ReluNet:
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())
