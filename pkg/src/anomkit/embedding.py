"""Token embedding sequences and the built-in hash embedder.

The advantage pipeline is model-agnostic: embeddings arrive either
from a JSONL file produced elsewhere, or from the hash embedder, which
maps every distinct token to a deterministic unit vector drawn from a
counter-based generator keyed by the token's bytes. Identical token
sequences therefore embed identically, giving a zero-cost diagonal in
the transport problem.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, ShapeError


@dataclass(frozen=True)
class TokenEmbeddingSequence:
    """Tokens with row-aligned embedding vectors and simplex weights."""

    tokens: tuple[str, ...]
    vectors: np.ndarray
    weights: np.ndarray
    uniform_default: bool = False

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim != 2:
            raise ShapeError(f"vectors must be 2-D, got shape {vectors.shape}")
        if len(self.tokens) == 0:
            raise DataError("embedding sequence needs at least one token")
        if vectors.shape[0] != len(self.tokens):
            raise ShapeError(
                f"{len(self.tokens)} tokens but {vectors.shape[0]} vectors"
            )
        if vectors.shape[1] < 1:
            raise ShapeError("embedding dimension must be >= 1")
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(self.tokens),):
            raise ShapeError("weights must align with tokens")
        if np.any(weights < 0) or abs(float(weights.sum()) - 1.0) > 1e-9:
            raise DataError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def uniform_weights(count: int) -> np.ndarray:
    return np.full(count, 1.0 / count)


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization used when only raw text is available."""
    return text.split()


def _token_vector(token: str, dim: int) -> np.ndarray:
    key = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
    rng = np.random.Generator(np.random.Philox(key=key))
    vec = rng.standard_normal(dim)
    norm = np.linalg.norm(vec)
    if norm == 0:  # pragma: no cover - standard normal draw is never all-zero
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


def hash_embedding(
    tokens: Sequence[str],
    dim: int = 16,
    weights: Optional[Sequence[float]] = None,
) -> TokenEmbeddingSequence:
    """Embed tokens with deterministic per-token unit vectors."""
    tokens = tuple(str(t) for t in tokens)
    if not tokens:
        raise DataError("cannot embed an empty token sequence")
    distinct = {tok: _token_vector(tok, dim) for tok in set(tokens)}
    vectors = np.stack([distinct[tok] for tok in tokens])
    if weights is None:
        return TokenEmbeddingSequence(tokens, vectors, uniform_weights(len(tokens)), True)
    return TokenEmbeddingSequence(tokens, vectors, np.asarray(weights, dtype=float))


def embedding_to_record(ident: str, seq: TokenEmbeddingSequence) -> dict:
    """Serialize to the embeddings JSONL shape; defaulted weights emit null."""
    return {
        "id": ident,
        "tokens": list(seq.tokens),
        "weights": None if seq.uniform_default else [float(w) for w in seq.weights],
        "vectors": [[float(x) for x in row] for row in seq.vectors],
    }


def record_to_embedding(record: dict) -> tuple[str, TokenEmbeddingSequence]:
    try:
        tokens = tuple(str(t) for t in record["tokens"])
        vectors = np.asarray(record["vectors"], dtype=float)
        raw_weights = record.get("weights")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad embedding record: {exc}") from exc
    if raw_weights is None:
        weights = uniform_weights(len(tokens))
        return str(record["id"]), TokenEmbeddingSequence(tokens, vectors, weights, True)
    return str(record["id"]), TokenEmbeddingSequence(
        tokens, vectors, np.asarray(raw_weights, dtype=float)
    )
