"""
Patch-token transformer that predicts the clean future block.

Each channel is an independent sequence. Past patches, noisy-future patches and
one diffusion-time token are attended jointly; rotary position embeddings rotate
queries and keys of the patch tokens, the time token is left unrotated. Future
token outputs are projected back to patch values and overlap-averaged to length H.
"""
import logging
from functools import lru_cache
from typing import Dict, Optional, Tuple, Union

import numpy as np

from config import DenoiserConfig
from nn import Tensor, concat, parameter
from utils.exceptions import NumericalError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Tensor]


# ----------------------------------------------------------------------
# patching
# ----------------------------------------------------------------------
def token_offsets(T: int, P: int, St: int) -> np.ndarray:
    """Start index of every patch; the last patch is right-aligned to the series end."""
    if T < P:
        raise ShapeError(f"patchify: series length {T} shorter than patch length {P}")
    if not 1 <= St <= P:
        raise ShapeError(f"patchify: stride {St} outside [1, {P}]")
    n_tok = int(np.ceil((T - P) / St)) + 1
    offsets = np.arange(n_tok) * St
    offsets[-1] = T - P
    return offsets


@lru_cache(maxsize=64)
def _patch_index(T: int, P: int, St: int) -> np.ndarray:
    index = token_offsets(T, P, St)[:, None] + np.arange(P)[None, :]
    index.setflags(write=False)
    return index


def patchify(series: ArrayLike, P: int, St: int) -> ArrayLike:
    """(..., T) -> (..., n_tok, P)."""
    index = _patch_index(series.shape[-1], P, St)
    if isinstance(series, Tensor):
        return series[..., index]
    return np.asarray(series)[..., index]


@lru_cache(maxsize=64)
def unpatch_matrix(T: int, P: int, St: int) -> np.ndarray:
    """(n_tok·P, T) matrix averaging every token value that covers each time index."""
    index = _patch_index(T, P, St)
    n_tok = index.shape[0]
    matrix = np.zeros((n_tok * P, T))
    matrix[np.arange(n_tok * P), index.ravel()] = 1.0
    matrix /= matrix.sum(axis=0, keepdims=True)
    matrix.setflags(write=False)
    return matrix


def unpatchify(tokens: ArrayLike, T: int, P: int, St: int) -> ArrayLike:
    """(..., n_tok, P) -> (..., T) by overlap averaging."""
    flat_shape = tokens.shape[:-2] + (tokens.shape[-2] * tokens.shape[-1],)
    matrix = unpatch_matrix(T, P, St)
    if isinstance(tokens, Tensor):
        return tokens.reshape(flat_shape) @ matrix
    return np.asarray(tokens).reshape(flat_shape) @ matrix


# ----------------------------------------------------------------------
# rotary position embedding
# ----------------------------------------------------------------------
def rope_tables(positions: np.ndarray, d_head: int, base: float = 10000.0,
                freqs: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """cos and signed-sin tables of shape (n, d_head) for interleaved pairs (2i, 2i+1)."""
    if d_head % 2 != 0:
        raise ShapeError(f"rope: head dimension must be even, got {d_head}")
    if freqs is None:
        freqs = base ** (-np.arange(0, d_head, 2) / d_head)
    angles = np.asarray(positions, dtype=np.float64)[:, None] * np.asarray(freqs)[None, :]
    cos = np.repeat(np.cos(angles), 2, axis=-1)
    sin = np.repeat(np.sin(angles), 2, axis=-1)
    sin[:, 0::2] *= -1.0
    return cos, sin


def _pair_swap(d_head: int) -> np.ndarray:
    perm = np.arange(d_head)
    perm[0::2], perm[1::2] = np.arange(1, d_head, 2), np.arange(0, d_head, 2)
    return perm


def apply_rope(x: ArrayLike, cos: np.ndarray, sin: np.ndarray) -> ArrayLike:
    """Rotate pairs of the last axis; ``cos``/``sin`` broadcast over leading axes."""
    swap = _pair_swap(x.shape[-1])
    if isinstance(x, Tensor):
        return x * cos + x[..., swap] * sin
    x = np.asarray(x, dtype=np.float64)
    return x * cos + x[..., swap] * sin


def rope_rotate(x: ArrayLike, positions, base: float = 10000.0,
                freqs: Optional[np.ndarray] = None) -> ArrayLike:
    """Rotary transform of (n, d_head) rows at the given integer positions."""
    cos, sin = rope_tables(np.asarray(positions), x.shape[-1], base, freqs)
    return apply_rope(x, cos, sin)


def sinusoidal_features(t: np.ndarray, dim: int) -> np.ndarray:
    """Fixed sin/cos features of the diffusion time fraction t ∈ [0, 1]."""
    half = dim // 2
    freqs = 10000.0 ** (-np.arange(half) / max(half, 1))
    angles = (np.asarray(t, dtype=np.float64) * 1000.0)[..., None] * freqs
    features = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    if features.shape[-1] < dim:
        features = np.concatenate([features, np.zeros(features.shape[:-1] + (dim - features.shape[-1],))], axis=-1)
    return features


# ----------------------------------------------------------------------
# model
# ----------------------------------------------------------------------
class DenoiserModel:
    """Parameters and forward pass of the unified denoiser/predictor."""

    def __init__(self, config: DenoiserConfig, seed: int = 0):
        self.config = config
        self.training = False
        self._rng = np.random.default_rng(seed)
        self._dropout_rng = np.random.default_rng([seed, 1])
        self.params: Dict[str, Tensor] = {}

        d, P = config.d_model, config.patch_len
        self._dense('embed.past', P, d)
        self._dense('embed.future', P, d)
        if config.time_embedding == 'linear':
            self._dense('time', 1, d)
        elif config.time_embedding == 'sinusoidal':
            self._dense('time', d, d)
        else:
            self._dense('time.in', 1, d)
            self._dense('time.out', d, d)

        for i in range(config.n_layers):
            prefix = f'blocks.{i}'
            self._norm(f'{prefix}.ln1', d)
            for proj in ('q', 'k', 'v', 'o'):
                self._dense(f'{prefix}.attn.{proj}', d, d)
            self._norm(f'{prefix}.ln2', d)
            self._dense(f'{prefix}.ffn.in', d, d * config.ffn_mult)
            self._dense(f'{prefix}.ffn.out', d * config.ffn_mult, d)
        self._norm('final_ln', d)
        self._dense('head', d, P)

        logger.info(f"Denoiser initialised with {self.parameter_count()} parameters "
                    f"({config.n_layers} layers, d_model={d}, heads={config.n_heads})")

    # parameter construction -------------------------------------------
    def _dense(self, name: str, fan_in: int, fan_out: int) -> None:
        self.params[f'{name}.w'] = parameter(self._rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)),
                                             name=f'{name}.w')
        self.params[f'{name}.b'] = parameter(np.zeros(fan_out), name=f'{name}.b')

    def _norm(self, name: str, dim: int) -> None:
        self.params[f'{name}.g'] = parameter(np.ones(dim), name=f'{name}.g')
        self.params[f'{name}.b'] = parameter(np.zeros(dim), name=f'{name}.b')

    def parameters(self) -> Dict[str, Tensor]:
        return self.params

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    # building blocks ----------------------------------------------------
    def _linear(self, name: str, x: Tensor) -> Tensor:
        return x @ self.params[f'{name}.w'] + self.params[f'{name}.b']

    def _layer_norm(self, name: str, x: Tensor) -> Tensor:
        return x.layer_norm() * self.params[f'{name}.g'] + self.params[f'{name}.b']

    def _dropout(self, x: Tensor) -> Tensor:
        if self.training and self.config.dropout > 0:
            return x.dropout(self.config.dropout, self._dropout_rng)
        return x

    def _time_token(self, t: np.ndarray) -> Tensor:
        """Embed the diffusion time fraction k/K as one token per sequence: (S,) -> (S, 1, d)."""
        kind = self.config.time_embedding
        if kind == 'linear':
            return self._linear('time', Tensor(t.reshape(-1, 1, 1)))
        if kind == 'sinusoidal':
            return self._linear('time', Tensor(sinusoidal_features(t, self.config.d_model)[:, None, :]))
        hidden = self._linear('time.in', Tensor(t.reshape(-1, 1, 1))).gelu()
        return self._linear('time.out', hidden)

    def _rope(self, n_past: int, n_future: int) -> Tuple[np.ndarray, np.ndarray]:
        positions = np.arange(n_past + n_future + 1, dtype=np.float64)
        cos, sin = rope_tables(positions, self.config.d_head, self.config.rope_base)
        # time token is order-free: identity rotation
        cos[-1], sin[-1] = 1.0, 0.0
        return cos, sin

    def _attention(self, prefix: str, x: Tensor, rope: Optional[Tuple[np.ndarray, np.ndarray]]) -> Tensor:
        S, n, d = x.shape
        heads, dh = self.config.n_heads, self.config.d_head

        def split(t: Tensor) -> Tensor:
            return t.reshape(S, n, heads, dh).transpose(0, 2, 1, 3)

        q = split(self._linear(f'{prefix}.attn.q', x))
        k = split(self._linear(f'{prefix}.attn.k', x))
        v = split(self._linear(f'{prefix}.attn.v', x))
        if rope is not None:
            q, k = apply_rope(q, *rope), apply_rope(k, *rope)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
        context = scores.softmax(axis=-1) @ v
        context = context.transpose(0, 2, 1, 3).reshape(S, n, d)
        return self._linear(f'{prefix}.attn.o', context)

    def _block(self, i: int, h: Tensor, rope) -> Tensor:
        prefix = f'blocks.{i}'
        h = h + self._dropout(self._attention(prefix, self._layer_norm(f'{prefix}.ln1', h), rope))
        hidden = self._linear(f'{prefix}.ffn.in', self._layer_norm(f'{prefix}.ln2', h)).gelu()
        return h + self._dropout(self._linear(f'{prefix}.ffn.out', hidden))

    # forward -------------------------------------------------------------
    def forward(self, x_past: ArrayLike, y_k: np.ndarray, k: np.ndarray, K: int) -> Tensor:
        """Clean-target estimate for S independent channels.

        ``x_past``: (S, L) normalized past, ``y_k``: (S, H) noisy future,
        ``k``: (S,) diffusion steps. Returns a (S, H) tensor.
        """
        x_past = Tensor.lift(x_past)
        y_k = np.asarray(y_k, dtype=np.float64)
        if x_past.ndim != 2 or y_k.ndim != 2 or x_past.shape[0] != y_k.shape[0]:
            raise ShapeError(f"denoiser: expected (S, L) and (S, H) inputs, got {x_past.shape} and {y_k.shape}")
        P, St = self.config.patch_len, self.config.stride
        S, H = y_k.shape
        t = np.broadcast_to(np.asarray(k, dtype=np.float64) / K, (S,))

        past_tokens = self._linear('embed.past', patchify(x_past, P, St))
        future_tokens = self._linear('embed.future', patchify(Tensor(y_k), P, St))
        n_past, n_future = past_tokens.shape[1], future_tokens.shape[1]
        h = concat([past_tokens, future_tokens, self._time_token(t)], axis=1)

        rope = self._rope(n_past, n_future) if self.config.use_rope else None
        for i in range(self.config.n_layers):
            try:
                h = self._block(i, h, rope)
            except NumericalError as e:
                raise NumericalError(f"denoiser layer {i}: {e}") from e

        h = self._layer_norm('final_ln', h)
        patches = self._linear('head', h[:, n_past:n_past + n_future, :])
        return unpatchify(patches, H, P, St)

    def predict(self, x_norm: ArrayLike, y_k: np.ndarray, k: np.ndarray, K: int) -> Tensor:
        """Channel-independent wrapper: (B, L, M), (B, H, M), (B,) -> (B, H, M)."""
        x_norm = Tensor.lift(x_norm)
        y_k = np.asarray(y_k, dtype=np.float64)
        B, L, M = x_norm.shape
        H = y_k.shape[1]
        if y_k.shape != (B, H, M):
            raise ShapeError(f"denoiser: future block {y_k.shape} does not match past block {x_norm.shape}")
        series = x_norm.transpose(0, 2, 1).reshape(B * M, L)
        noisy = y_k.transpose(0, 2, 1).reshape(B * M, H)
        steps = np.repeat(np.broadcast_to(np.asarray(k), (B,)), M)
        out = self.forward(series, noisy, steps, K)
        return out.reshape(B, M, H).transpose(0, 2, 1)
