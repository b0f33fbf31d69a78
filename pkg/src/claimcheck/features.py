"""Claim featurization: sentence embedding ++ claim-span TF-IDF blocks.

The embedding block averages word vectors over the whole sentence; the two
TF-IDF blocks (word uni+bigrams, character trigrams) cover only the claim
span.  Vector width is fixed once fitted.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import sparse


class FeatureError(ValueError):
    pass


_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class EmbeddingTable:
    """Word -> vector lookup with a deterministic per-word fallback.

    Unknown words hash to a seeded random projection, so runs are hermetic
    without a pretrained vector file.
    """

    def __init__(self, dimension: int, vectors: Optional[dict[str, np.ndarray]] = None):
        if dimension < 1:
            raise FeatureError("embedding dimension must be positive")
        self.dimension = dimension
        self.vectors = vectors or {}
        self._fallback_cache: dict[str, np.ndarray] = {}

    @classmethod
    def hashed(cls, dimension: int) -> "EmbeddingTable":
        return cls(dimension)

    @classmethod
    def load(cls, path: Path | str) -> "EmbeddingTable":
        vectors: dict[str, np.ndarray] = {}
        dimension = None
        with Path(path).open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                word, values = parts[0], parts[1:]
                try:
                    vec = np.array([float(v) for v in values], dtype=np.float32)
                except ValueError:
                    raise FeatureError(f"line {lineno}: bad vector component") from None
                if dimension is None:
                    dimension = len(vec)
                elif len(vec) != dimension:
                    raise FeatureError(f"line {lineno}: dimension mismatch")
                vectors[word] = vec
        if dimension is None:
            raise FeatureError("embedding file has no vectors")
        return cls(dimension, vectors)

    def vector(self, word: str) -> np.ndarray:
        known = self.vectors.get(word)
        if known is not None:
            return known
        cached = self._fallback_cache.get(word)
        if cached is None:
            seed = int.from_bytes(hashlib.sha256(word.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            cached = (rng.standard_normal(self.dimension) / math.sqrt(self.dimension)
                      ).astype(np.float32)
            self._fallback_cache[word] = cached
        return cached

    def sentence_vector(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            return np.zeros(self.dimension, dtype=np.float32)
        acc = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            acc += self.vector(token)
        return (acc / len(tokens)).astype(np.float32)


def word_ngrams(tokens: Sequence[str]) -> list[str]:
    grams = list(tokens)
    grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return grams


def char_trigrams(text: str) -> list[str]:
    low = text.lower()
    return [low[i:i + 3] for i in range(len(low) - 2)]


@dataclass(frozen=True)
class _TfidfBlock:
    vocab: tuple[str, ...]
    idf: np.ndarray  # aligned with vocab
    index: dict[str, int]

    def weights(self, grams: Sequence[str], total: int) -> list[tuple[int, float]]:
        """TF-IDF entries; TF = raw count / total (token count for the word
        block, trigram count for the char block)."""
        if not grams or total <= 0:
            return []
        counts: dict[int, int] = {}
        for gram in grams:
            at = self.index.get(gram)
            if at is not None:
                counts[at] = counts.get(at, 0) + 1
        return [(at, (n / total) * float(self.idf[at]))
                for at, n in sorted(counts.items())]


def _fit_block(documents: list[list[str]], cap: int) -> _TfidfBlock:
    df: dict[str, int] = {}
    for grams in documents:
        for gram in set(grams):
            df[gram] = df.get(gram, 0) + 1
    # top-N by document frequency, lexicographic tie-break
    chosen = sorted(df, key=lambda g: (-df[g], g))[:max(cap, 0)]
    chosen.sort()
    n_docs = len(documents)
    idf = np.array([math.log((1 + n_docs) / (1 + df[g])) + 1 for g in chosen],
                   dtype=np.float32)
    return _TfidfBlock(tuple(chosen), idf, {g: i for i, g in enumerate(chosen)})


class FittedFeaturizer:
    """Immutable featurizer; featurize is a pure function of its inputs."""

    def __init__(self, embedding: EmbeddingTable,
                 word_block: _TfidfBlock, char_block: _TfidfBlock):
        self.embedding = embedding
        self.word_block = word_block
        self.char_block = char_block

    @property
    def width(self) -> int:
        return (self.embedding.dimension
                + len(self.word_block.vocab) + len(self.char_block.vocab))

    def featurize(self, sentence_text: str, claim_span: tuple[int, int]) -> np.ndarray:
        out = np.zeros(self.width, dtype=np.float32)
        out[:self.embedding.dimension] = self.embedding.sentence_vector(sentence_text)
        lo, hi = claim_span
        span = sentence_text[lo:hi]
        tokens = tokenize(span)
        trigrams = char_trigrams(span)
        base = self.embedding.dimension
        for at, weight in self.word_block.weights(word_ngrams(tokens), len(tokens)):
            out[base + at] = weight
        base += len(self.word_block.vocab)
        for at, weight in self.char_block.weights(trigrams, len(trigrams)):
            out[base + at] = weight
        return out

    def featurize_matrix(self, pairs: Iterable[tuple[str, tuple[int, int]]]
                         ) -> sparse.csr_matrix:
        """Stack featurize outputs as a CSR matrix (bulk path for training)."""
        data: list[float] = []
        indices: list[int] = []
        indptr = [0]
        dim = self.embedding.dimension
        word_base = dim
        char_base = dim + len(self.word_block.vocab)
        for sentence_text, claim_span in pairs:
            emb = self.embedding.sentence_vector(sentence_text)
            nz = np.nonzero(emb)[0]
            indices.extend(int(i) for i in nz)
            data.extend(float(emb[i]) for i in nz)
            lo, hi = claim_span
            span = sentence_text[lo:hi]
            tokens = tokenize(span)
            trigrams = char_trigrams(span)
            for at, weight in self.word_block.weights(word_ngrams(tokens), len(tokens)):
                indices.append(word_base + at)
                data.append(weight)
            for at, weight in self.char_block.weights(trigrams, len(trigrams)):
                indices.append(char_base + at)
                data.append(weight)
            indptr.append(len(indices))
        matrix = sparse.csr_matrix(
            (np.array(data, dtype=np.float32),
             np.array(indices, dtype=np.int32),
             np.array(indptr, dtype=np.int32)),
            shape=(len(indptr) - 1, self.width))
        return matrix


def fit_featurizer(claims: Sequence[tuple[str, tuple[int, int]]],
                   embedding: EmbeddingTable,
                   word_cap: int = 2000,
                   char_cap: int = 2000) -> FittedFeaturizer:
    """Fit TF-IDF vocabularies on claim spans; deterministic given the corpus set."""
    if not claims:
        raise FeatureError("cannot fit featurizer on an empty corpus")
    word_docs = []
    char_docs = []
    for sentence_text, (lo, hi) in claims:
        span = sentence_text[lo:hi]
        word_docs.append(word_ngrams(tokenize(span)))
        char_docs.append(char_trigrams(span))
    return FittedFeaturizer(embedding,
                            _fit_block(word_docs, word_cap),
                            _fit_block(char_docs, char_cap))
