"""Two-layer feed-forward nets and a tanh recurrent cell on the autodiff tape.

Parameter containers hold plain float64 arrays; training code swaps in leaf
Vars (see ``named_params`` / ``with_vars``) so the same forward functions
serve both inference and gradient computation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Union

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Var

ArrayOrVar = Union[np.ndarray, Var]

ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "identity": lambda v: ad.as_var(v),
}


@dataclass
class Mlp2Params:
    """Weights of a two-layer net: out = W2 . act(W1 . x + b1) + b2."""

    W1: ArrayOrVar
    b1: ArrayOrVar
    W2: ArrayOrVar
    b2: ArrayOrVar
    activation: str = "relu"

    def check(self) -> None:
        W1, b1, W2, b2 = (_value(t) for t in (self.W1, self.b1, self.W2, self.b2))
        if W1.shape[0] != b1.shape[0] or W2.shape[1] != W1.shape[0] or W2.shape[0] != b2.shape[0]:
            raise ShapeError(
                f"inconsistent mlp dims: W1 {W1.shape}, b1 {b1.shape}, W2 {W2.shape}, b2 {b2.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class RnnParams:
    """Weights of the recurrent cell: h' = tanh(W_in . x + W_h . h + b)."""

    W_in: ArrayOrVar
    W_h: ArrayOrVar
    b: ArrayOrVar

    @property
    def hidden_dim(self) -> int:
        return _value(self.b).shape[0]

    def check(self) -> None:
        W_in, W_h, b = (_value(t) for t in (self.W_in, self.W_h, self.b))
        if not (W_in.shape[0] == W_h.shape[0] == W_h.shape[1] == b.shape[0]):
            raise ShapeError(
                f"inconsistent rnn dims: W_in {W_in.shape}, W_h {W_h.shape}, b {b.shape}"
            )


def _value(t: ArrayOrVar) -> np.ndarray:
    return t.value if isinstance(t, Var) else t


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def mlp2_init(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int,
              activation: str = "relu") -> Mlp2Params:
    """Seeded init, every tensor uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    return Mlp2Params(
        W1=_uniform(rng, (d_hidden, d_in), d_in),
        b1=_uniform(rng, (d_hidden,), d_in),
        W2=_uniform(rng, (d_out, d_hidden), d_hidden),
        b2=_uniform(rng, (d_out,), d_hidden),
        activation=activation,
    )


def rnn_init(rng: np.random.Generator, d_in: int, d_hidden: int) -> RnnParams:
    return RnnParams(
        W_in=_uniform(rng, (d_hidden, d_in), d_in),
        W_h=_uniform(rng, (d_hidden, d_hidden), d_hidden),
        b=_uniform(rng, (d_hidden,), d_hidden),
    )


def mlp2_forward(params: Mlp2Params, x: ArrayOrVar) -> Var:
    """Forward pass; ``x`` may be a single vector or a row batch (B, d_in)."""
    params.check()
    act = ACTIVATIONS[params.activation]
    xv = ad.as_var(x)
    W1 = ad.as_var(params.W1)
    if xv.value.ndim == 1:
        if xv.value.shape[0] != W1.value.shape[1]:
            raise ShapeError(f"input dim {xv.value.shape[0]} != {W1.value.shape[1]}")
        hidden = act(ad.add(ad.matmul(W1, xv), params.b1))
        return ad.add(ad.matmul(params.W2, hidden), params.b2)
    if xv.value.ndim == 2:
        if xv.value.shape[1] != W1.value.shape[1]:
            raise ShapeError(f"input dim {xv.value.shape[1]} != {W1.value.shape[1]}")
        hidden = act(ad.add(ad.matmul(xv, ad.transpose(W1)), params.b1))
        return ad.add(ad.matmul(hidden, ad.transpose(ad.as_var(params.W2))), params.b2)
    raise ShapeError(f"mlp input must be 1-d or 2-d, got {xv.value.shape}")


def rnn_step(params: RnnParams, h_prev: ArrayOrVar, x: ArrayOrVar) -> Var:
    """One recurrent update; output lies in (-1, 1) elementwise."""
    params.check()
    hv, xv = ad.as_var(h_prev), ad.as_var(x)
    W_in = _value(params.W_in)
    if xv.value.shape[0] != W_in.shape[1]:
        raise ShapeError(f"rnn input dim {xv.value.shape[0]} != {W_in.shape[1]}")
    if hv.value.shape[0] != W_in.shape[0]:
        raise ShapeError(f"rnn hidden dim {hv.value.shape[0]} != {W_in.shape[0]}")
    return ad.tanh(ad.add(ad.add(ad.matmul(params.W_in, xv), ad.matmul(params.W_h, hv)), params.b))


def cosine_distance(v1, v2) -> float:
    """1 - cos(v1, v2) in [0, 2]; zero-norm inputs are a domain error."""
    return float(ad.cosine_distance_var(v1, v2).value)


def named_params(prefix: str, params: Mlp2Params | RnnParams) -> Dict[str, np.ndarray]:
    """Flatten a parameter container into '<prefix>.<field>' -> array."""
    if isinstance(params, Mlp2Params):
        fields = ("W1", "b1", "W2", "b2")
    else:
        fields = ("W_in", "W_h", "b")
    return {f"{prefix}.{name}": _value(getattr(params, name)) for name in fields}


def with_vars(params: Mlp2Params | RnnParams, prefix: str,
              leaves: Dict[str, Var]) -> Mlp2Params | RnnParams:
    """Copy of ``params`` whose tensors are the given leaf Vars."""
    if isinstance(params, Mlp2Params):
        fields = ("W1", "b1", "W2", "b2")
    else:
        fields = ("W_in", "W_h", "b")
    return replace(params, **{name: leaves[f"{prefix}.{name}"] for name in fields})
