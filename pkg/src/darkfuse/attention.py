"""Bidirectional cross-modal attention over patch tokens.

Feature maps are cut into non-overlapping p x p patches (row-major), each
flattened to a token.  Queries and keys share one seeded random orthonormal
projection, so attention scores reduce to exact token inner products;
values use a second orthonormal projection.  Image queries attend over
event tokens and vice versa; the two attended sequences are concatenated
along the channel axis after mapping back to the spatial grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError


@dataclass
class TokenizedFeatures:
    """Token matrix plus the geometry needed to invert the tokenization."""

    tokens: np.ndarray  # (N, channels * patch^2)
    patch: int
    channels: int
    height: int  # original (unpadded) spatial size
    width: int
    grid_h: int
    grid_w: int

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def token_dim(self) -> int:
        return self.tokens.shape[1]


def tokenize(features: np.ndarray, patch: int) -> TokenizedFeatures:
    """Cut (C, H, W) features into row-major p x p patch tokens.

    The right/bottom remainder is zero-padded; the original size is kept so
    detokenize can crop it away.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise InputDomainError("features must be (C, H, W)")
    if patch < 1:
        raise InputDomainError("patch size must be >= 1")
    c, h, w = features.shape
    grid_h = -(-h // patch)
    grid_w = -(-w // patch)
    pad_h = grid_h * patch - h
    pad_w = grid_w * patch - w
    if pad_h or pad_w:
        features = np.pad(features, ((0, 0), (0, pad_h), (0, pad_w)))
    blocks = features.reshape(c, grid_h, patch, grid_w, patch)
    tokens = blocks.transpose(1, 3, 0, 2, 4).reshape(grid_h * grid_w, c * patch * patch)
    return TokenizedFeatures(tokens, patch, c, h, w, grid_h, grid_w)


def detokenize(tok: TokenizedFeatures) -> np.ndarray:
    """Invert tokenize; exact round trip."""
    p, c = tok.patch, tok.channels
    blocks = tok.tokens.reshape(tok.grid_h, tok.grid_w, c, p, p)
    full = blocks.transpose(2, 0, 3, 1, 4).reshape(c, tok.grid_h * p, tok.grid_w * p)
    return full[:, : tok.height, : tok.width].copy()


def _orthonormal(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))[None, :]


def projection_matrices(proj_seed: int, token_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """(P_qk, P_v): query/key share one orthonormal map, values get another.

    Sharing the query/key projection makes Q K^T equal the raw token Gram
    matrix (orthonormal maps preserve inner products), so attention weights
    measure token similarity exactly while remaining seed-reproducible.
    """
    rng = np.random.default_rng(proj_seed)
    return _orthonormal(rng, token_dim), _orthonormal(rng, token_dim)


def attend(queries: np.ndarray, keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    d = queries.shape[1]
    scores = queries @ keys.T / np.sqrt(d)
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ values


def cross_attention(
    f_img_w: np.ndarray,
    f_evt_w: np.ndarray,
    proj_seed: int,
    patch: int,
) -> tuple[TokenizedFeatures, TokenizedFeatures]:
    """Single-head bidirectional attention between weighted feature maps.

    Returns (attended_events, attended_image): image queries attending over
    event keys/values, and event queries attending over image keys/values.
    Both keep the image tokenization geometry for detokenization.
    """
    f_img_w = np.asarray(f_img_w, dtype=np.float64)
    f_evt_w = np.asarray(f_evt_w, dtype=np.float64)
    if f_img_w.shape != f_evt_w.shape:
        raise InputDomainError("modality feature maps must share a shape")
    tok_img = tokenize(f_img_w, patch)
    tok_evt = tokenize(f_evt_w, patch)
    p_qk, p_v = projection_matrices(proj_seed, tok_img.token_dim)

    q_img = tok_img.tokens @ p_qk
    k_img = q_img
    v_img = tok_img.tokens @ p_v
    q_evt = tok_evt.tokens @ p_qk
    k_evt = q_evt
    v_evt = tok_evt.tokens @ p_v

    a_evt = attend(q_img, k_evt, v_evt)
    a_img = attend(q_evt, k_img, v_img)
    meta = tok_img
    out_evt = TokenizedFeatures(a_evt, meta.patch, meta.channels, meta.height,
                                meta.width, meta.grid_h, meta.grid_w)
    out_img = TokenizedFeatures(a_img, meta.patch, meta.channels, meta.height,
                                meta.width, meta.grid_h, meta.grid_w)
    return out_evt, out_img


def fuse_concat(a_evt: TokenizedFeatures, a_img: TokenizedFeatures) -> np.ndarray:
    """Channel-concatenate two attended token sets back on the pixel grid."""
    if a_evt.tokens.shape != a_img.tokens.shape:
        raise InputDomainError("attended token sets must share a shape")
    if (a_evt.grid_h, a_evt.grid_w, a_evt.patch) != (a_img.grid_h, a_img.grid_w, a_img.patch):
        raise InputDomainError("attended token sets must share a tokenization")
    return np.concatenate([detokenize(a_evt), detokenize(a_img)], axis=0)
