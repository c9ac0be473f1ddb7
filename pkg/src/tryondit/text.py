"""Toy text conditioning: caption templates, hash tokenization, encoding.

One deterministic encoder replaces the usual pretrained pair, emitting
both a pooled vector (global conditioning) and a token sequence (the
cross-token stream the transformer attends over). Tokenization hashes
words into a fixed vocabulary, so the whole path is dependency-free and
reproducible; collisions exist and are measured in the tests rather than
assumed away.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

# Ordinary (non-integrated) caption used by the plain-text conditioning mode.
ORDINARY_CAPTION = "A model is wearing a top."

_TEMPLATE = (
    "Side-by-side: [LEFT] {g} on a plain background; "
    "[RIGHT] a person wearing {g}, {p}."
)
_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Caption:
    text: str
    is_integrated: bool = False


EMPTY_CAPTION = Caption(text="", is_integrated=False)


@dataclass(frozen=True)
class TextEncoding:
    """sequence: (max_tokens, d_text) with zero rows past `length`;
    pooled: mean of the non-padding rows (zero vector when length == 0)."""

    sequence: np.ndarray
    pooled: np.ndarray
    length: int


def build_integrated_caption(garment_desc: str, person_desc: str) -> Caption:
    """Render the fixed two-panel caption template.

    The template string is part of the external contract; a parser can
    recover `garment_desc` exactly as long as the descriptions do not
    contain the delimiter substrings.
    """
    if not garment_desc.strip():
        raise ValueError("garment description must be non-empty")
    if not person_desc.strip():
        raise ValueError("person description must be non-empty")
    return Caption(text=_TEMPLATE.format(g=garment_desc, p=person_desc), is_integrated=True)


def parse_integrated_caption(caption: Caption) -> tuple[str, str]:
    """Invert :func:`build_integrated_caption` (delimiter-free descriptions only)."""
    m = re.fullmatch(
        r"Side-by-side: \[LEFT\] (.*) on a plain background; "
        r"\[RIGHT\] a person wearing \1, (.*)\.",
        caption.text,
    )
    if m is None:
        raise ValueError("caption does not match the integrated template")
    return m.group(1), m.group(2)


def _hash_word(word: str, vocab_size: int) -> int:
    # id 0 is reserved for padding
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    return 1 + int.from_bytes(digest[:8], "little") % (vocab_size - 1)


def tokenize(caption: Caption, vocab_size: int, max_tokens: int) -> np.ndarray:
    """Lowercase word-split tokens hashed into [1, vocab_size); 0 pads."""
    words = _WORD_RE.findall(caption.text.lower())
    ids = [_hash_word(w, vocab_size) for w in words[:max_tokens]]
    ids += [0] * (max_tokens - len(ids))
    return np.asarray(ids, dtype=np.int64)


def sinusoidal_positions(n: int, dim: int, dtype=np.float64) -> np.ndarray:
    """Classic transformer position table, (n, dim)."""
    if dim % 2:
        raise ValueError(f"position encoding dim must be even; got {dim}")
    pos = np.arange(n, dtype=np.float64)[:, None]
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    angles = pos * freqs[None, :]
    table = np.zeros((n, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : dim - half])
    return table.astype(dtype)


class TextEncoder:
    """Frozen embedding table + sinusoidal positions; pooled = mean over tokens."""

    def __init__(self, vocab_size: int, max_tokens: int, d_text: int, seed: int,
                 dtype=np.float32):
        self.vocab_size = vocab_size
        self.max_tokens = max_tokens
        self.d_text = d_text
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E47]))
        self.embedding = (rng.standard_normal((vocab_size, d_text)) * 0.02).astype(dtype)
        self.positions = sinusoidal_positions(max_tokens, d_text, dtype=dtype)

    def encode(self, tokens: np.ndarray) -> TextEncoding:
        tokens = np.asarray(tokens)
        if tokens.shape != (self.max_tokens,):
            raise ValueError(f"expected {self.max_tokens} token ids; got shape {tokens.shape}")
        if tokens.min() < 0 or tokens.max() >= self.vocab_size:
            raise ValueError(
                f"token id out of vocab [0, {self.vocab_size}): "
                f"range seen [{tokens.min()}, {tokens.max()}]"
            )
        nonpad = tokens != 0
        length = int(nonpad.sum())
        seq = (self.embedding[tokens] + self.positions) * nonpad[:, None]
        if length:
            pooled = seq[:length].mean(axis=0)
        else:
            pooled = np.zeros(self.d_text, dtype=seq.dtype)
        return TextEncoding(sequence=seq.astype(self.embedding.dtype), pooled=pooled,
                            length=length)

    def encode_caption(self, caption: Caption) -> TextEncoding:
        return self.encode(tokenize(caption, self.vocab_size, self.max_tokens))


def drop_caption(caption: Caption, p: float, rng: np.random.Generator) -> Caption:
    """With probability p return the empty caption; consumes exactly one draw."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"drop probability must be in [0, 1]; got {p}")
    if rng.random() < p:
        return EMPTY_CAPTION
    return caption
