"""Intra-sequence encoding: GRU over the context items, user-personalized
attention over the hidden states, and the final interest vector.

Every operation accepts either single vectors (d,) or batches (B, d) and is a
pure function of its tensors, so gradients flow to all parameters and inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from issr import numerics as nm
from issr.inter_encoder import _uniform_init


@dataclass
class GruGate:
    input_weight: nm.Tensor  # (d, d)
    recur_weight: nm.Tensor  # (d, d)
    bias: nm.Tensor  # (d,)

    @classmethod
    def init(cls, d, rng, dtype=np.float32):
        return cls(
            input_weight=_uniform_init(rng, (d, d), d, dtype),
            recur_weight=_uniform_init(rng, (d, d), d, dtype),
            bias=nm.parameter(np.zeros(d, dtype=dtype)),
        )

    def named(self, prefix):
        return {
            f"{prefix}/input_weight": self.input_weight,
            f"{prefix}/recur_weight": self.recur_weight,
            f"{prefix}/bias": self.bias,
        }


@dataclass
class GruParams:
    """Update gate, reset gate, and candidate-state weights."""

    update: GruGate
    reset: GruGate
    candidate: GruGate

    @classmethod
    def init(cls, d, rng, dtype=np.float32):
        return cls(
            update=GruGate.init(d, rng, dtype),
            reset=GruGate.init(d, rng, dtype),
            candidate=GruGate.init(d, rng, dtype),
        )

    def named(self, prefix="gru"):
        out = {}
        out.update(self.update.named(f"{prefix}/update"))
        out.update(self.reset.named(f"{prefix}/reset"))
        out.update(self.candidate.named(f"{prefix}/candidate"))
        return out


@dataclass
class AttentionParams:
    """Two-layer scoring network: hidden layer d wide, scalar output."""

    out_weight: nm.Tensor  # (1, d) row; reduces the hidden layer to a score
    out_bias: nm.Tensor  # (1,)
    hidden_weight: nm.Tensor  # (d, 2d) over [user embedding; hidden state]
    hidden_bias: nm.Tensor  # (d,)

    @classmethod
    def init(cls, d, rng, dtype=np.float32):
        return cls(
            out_weight=_uniform_init(rng, (1, d), d, dtype),
            out_bias=nm.parameter(np.zeros(1, dtype=dtype)),
            hidden_weight=_uniform_init(rng, (d, 2 * d), d, dtype),
            hidden_bias=nm.parameter(np.zeros(d, dtype=dtype)),
        )

    def named(self, prefix="attention"):
        return {
            f"{prefix}/out_weight": self.out_weight,
            f"{prefix}/out_bias": self.out_bias,
            f"{prefix}/hidden_weight": self.hidden_weight,
            f"{prefix}/hidden_bias": self.hidden_bias,
        }


@dataclass
class InterestCombineParams:
    weight: nm.Tensor  # (d, 2d) over [attended state; last hidden state]

    @classmethod
    def init(cls, d, rng, dtype=np.float32):
        return cls(weight=_uniform_init(rng, (d, 2 * d), d, dtype))

    def named(self, prefix="combine"):
        return {f"{prefix}/weight": self.weight}


def _promote(x):
    """Lift a (d,) vector to a (1, d) batch; report whether lifting happened."""
    if x.data.ndim == 1:
        return nm.reshape(x, (1, x.data.shape[0])), True
    return x, False


def gru_forward(xs, params):
    """Run the GRU recurrence from a zero initial state.

    xs is a list of L input tensors, each (d,) or (B, d).  Returns the list
    of hidden states, one per step, same shapes as the inputs.
    """
    if not xs:
        raise ValueError("gru_forward needs at least one input step")
    first, single = _promote(xs[0])
    steps = [first] + [_promote(x)[0] for x in xs[1:]]
    h = nm.constant(np.zeros_like(steps[0].data))
    one = nm.constant(np.ones((), dtype=steps[0].data.dtype))
    hidden = []
    for x in steps:
        z = nm.sigmoid(nm.add(nm.affine(params.update.input_weight, x, params.update.bias),
                              nm.affine(params.update.recur_weight, h)))
        r = nm.sigmoid(nm.add(nm.affine(params.reset.input_weight, x, params.reset.bias),
                              nm.affine(params.reset.recur_weight, h)))
        cand = nm.tanh(nm.add(nm.affine(params.candidate.input_weight, x, params.candidate.bias),
                              nm.affine(params.candidate.recur_weight, nm.mul(r, h))))
        h = nm.add(nm.mul(one - z, h), nm.mul(z, cand))
        hidden.append(h)
    if single:
        return [nm.reshape(hh, (hh.data.shape[1],)) for hh in hidden]
    return hidden


def attention_scores(e_u, hs, params, activation="tanh"):
    """Unnormalized per-position scores: out_w * act(hidden_w [e_u; h_j] + b) + out_b.

    Returns shape (L,) for vector inputs or (B, L) for batches.
    """
    if not hs:
        raise ValueError("attention needs at least one hidden state")
    e_b, single = _promote(e_u)
    cols = []
    for h in hs:
        h_b, _ = _promote(h)
        joint = nm.concat([e_b, h_b], axis=-1)
        inner = nm.activation(nm.affine(params.hidden_weight, joint, params.hidden_bias),
                              activation)
        cols.append(nm.affine(params.out_weight, inner, params.out_bias))  # (B, 1)
    scores = nm.concat(cols, axis=-1)  # (B, L)
    if single:
        return nm.reshape(scores, (len(hs),))
    return scores


def attention_weights(e_u, hs, params, activation="tanh"):
    """Softmax-normalized attention over the hidden states."""
    scores = attention_scores(e_u, hs, params, activation)
    return nm.softmax(scores, axis=-1)


def interest(weights, hs, combine_params):
    """Interest vector: attention-weighted sum of hidden states, concatenated
    with the last hidden state and linearly combined."""
    if not hs:
        raise ValueError("interest needs at least one hidden state")
    w_b, single = _promote(weights)  # (B, L)
    hs_b = [_promote(h)[0] for h in hs]
    batch, d = hs_b[0].data.shape
    stacked = nm.concat([nm.reshape(h, (batch, 1, d)) for h in hs_b], axis=1)  # (B, L, d)
    w3 = nm.reshape(w_b, (batch, len(hs), 1))
    attended = nm.tensor_sum(nm.mul(w3, stacked), axis=1)  # (B, d)
    combined = nm.concat([attended, hs_b[-1]], axis=-1)
    s = nm.affine(combine_params.weight, combined)
    if single:
        return nm.reshape(s, (d,))
    return s
