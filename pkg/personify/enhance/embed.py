"""
Turns the narratives into the node feature matrix. Two embedders exist:
    * HASH: signed feature hashing of the lowercased alphanumeric tokens, an
      offline stand-in for a sentence embedding model. Each token is hashed
      with 64-bit BLAKE2b; the value modulo d is the bucket and its top bit
      is the sign (0 is +1, 1 is -1).
    * EXTERNAL: an embedding service with the usual JSON interface
      (`{"model", "input"}` answered by `{"data": [{"embedding"}]}`).

Rows are L2-normalized in both cases. There's no silent fallback between the
two kinds: a failing service is an error.
"""

import os
import re
import hashlib
import logging
from enum import Enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import httpx
import numpy as np

from personify import PersonifyError
from personify.model import FeatureMatrix


TOKEN_REGEX = re.compile(r"[^0-9a-z]+")

# Number of narratives sent to the embedding service per request.
BATCH_SIZE = 64


class EmbeddingError(PersonifyError):
    pass


class EmbedderKind(Enum):
    EXTERNAL = 'EXTERNAL'
    HASH = 'HASH'


@dataclass(frozen=True)
class EmbedderSpec:
    kind: EmbedderKind = EmbedderKind.HASH
    dim: int = 384
    endpoint: Optional[str] = None
    model: Optional[str] = None
    token_env: Optional[str] = None
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise EmbeddingError(f"The embedding dimension must be at least"
                                 f" 1, got {self.dim}")
        if self.kind == EmbedderKind.EXTERNAL and not self.endpoint:
            raise EmbeddingError("The external embedder needs an endpoint"
                                 " (the embed_endpoint option)")


def tokenize(text: str) -> List[str]:
    return [token for token in TOKEN_REGEX.split(text.lower()) if token]


def hash_token(token: str, dim: int) -> Tuple[int, int]:
    """
    Returns the (bucket, sign) pair of a token.
    """

    digest = hashlib.blake2b(token.encode('utf-8'), digest_size=8).digest()
    value = int.from_bytes(digest, 'big')
    return value % dim, -1 if value >> 63 else 1


def _normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return np.divide(matrix, norms, out=np.zeros_like(matrix),
                     where=norms > 0)


def hash_embed(narratives: Sequence[str], dim: int) -> FeatureMatrix:
    matrix = np.zeros((len(narratives), dim))
    for row, text in enumerate(narratives):
        for token in tokenize(text):
            bucket, sign = hash_token(token, dim)
            matrix[row, bucket] += sign
    return _normalize(matrix)


def external_embed(spec: EmbedderSpec,
                   narratives: Sequence[str]) -> FeatureMatrix:

    headers = {}
    token = os.environ.get(spec.token_env) if spec.token_env else None
    if token:
        headers['Authorization'] = f"Bearer {token}"

    # Empty narratives stay as zero rows, only the rest is sent.
    todo = [i for i, text in enumerate(narratives) if text.strip()]
    matrix = np.zeros((len(narratives), spec.dim))
    with httpx.Client(headers=headers, timeout=spec.timeout) as client:
        for start in range(0, len(todo), BATCH_SIZE):
            rows = todo[start:start + BATCH_SIZE]
            payload = {'input': [narratives[i] for i in rows]}
            if spec.model:
                payload['model'] = spec.model
            try:
                response = client.post(spec.endpoint, json=payload)
                response.raise_for_status()
                data = response.json()['data']
                vectors = np.array([item['embedding'] for item in data],
                                   dtype=np.float64)
            except httpx.HTTPError as e:
                raise EmbeddingError(f"The embedding service failed: {e}")
            except (KeyError, TypeError, ValueError) as e:
                raise EmbeddingError(f"Unexpected answer from the embedding"
                                     f" service: {e!r}")

            if vectors.shape != (len(rows), spec.dim):
                raise EmbeddingError(f"The embedding service returned shape"
                                     f" {vectors.shape}, expected"
                                     f" {(len(rows), spec.dim)}")
            if not np.all(np.isfinite(vectors)):
                raise EmbeddingError("The embedding service returned"
                                     " non-finite values")
            matrix[rows] = vectors

    return _normalize(matrix)


def embed(spec: EmbedderSpec, narratives: Sequence[str]) -> FeatureMatrix:
    """
    N x d feature matrix, one row per narrative in the same order. Empty
    narratives give zero rows.
    """

    if len(narratives) == 0:
        raise EmbeddingError("There are no narratives to embed")

    empty = sum(1 for text in narratives if not tokenize(text))
    if empty:
        logging.warning("%d narratives have no words, their feature rows"
                        " are zero", empty)

    if spec.kind == EmbedderKind.HASH:
        return hash_embed(narratives, spec.dim)
    return external_embed(spec, narratives)
