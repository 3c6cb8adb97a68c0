"""Embedding tables and semantic initialization of timestamp tokens.

A new timestamp token's embedding is the mean of the pre-trained embeddings of
the subword tokens of its numeric string: the token for "<0.04>" starts at the
mean of the rows for the tokenization of "0.04". Timestamp rows are frozen so
they keep naming the same time coordinate as training moves everything else.

Tables serialize to a bit-exact little-endian binary format ("TPEB") with a
UTF-8 sidecar listing token surfaces, one per line, in row order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from .prompts import TimestampVocab

TPEB_MAGIC = b"TPEB"
TPEB_VERSION = 1
_HEADER = struct.Struct("<4sHII")  # magic, version, vocab_size, dim


class EmptyTokenizationError(ValueError):
    """The tokenizer produced no ids for the given string."""


class UnknownTokenIdError(ValueError):
    """A produced id does not index a row of the base table."""


class CorruptTableError(ValueError):
    """The binary table file is malformed or truncated."""


class TokenizerSpec(Protocol):
    """Deterministic mapping from text to an ordered list of token ids."""

    def encode(self, text: str) -> list[int]: ...


class CharTokenizer:
    """Reference tokenizer: one id per character.

    Splits numeric strings into digit/punctuation tokens, e.g.
    "0.04" -> ids of ("0", ".", "0", "4"). Real subword tokenizers plug in
    through the same `encode` interface.
    """

    def __init__(self, char_ids: dict[str, int]):
        for char in char_ids:
            if len(char) != 1:
                raise ValueError(f"char tokenizer keys must be single characters, got {char!r}")
        self._char_ids = dict(char_ids)

    def encode(self, text: str) -> list[int]:
        ids = []
        for char in text:
            if char not in self._char_ids:
                raise UnknownTokenIdError(f"character {char!r} has no token id")
            ids.append(self._char_ids[char])
        return ids


@dataclass(frozen=True)
class EmbeddingTable:
    """Token embeddings: one float32 row per token, plus per-row frozen flags."""

    names: tuple[str, ...]
    rows: np.ndarray
    frozen: np.ndarray

    def __post_init__(self) -> None:
        rows = np.ascontiguousarray(self.rows, dtype=np.float32)
        frozen = np.ascontiguousarray(self.frozen, dtype=bool)
        if rows.ndim != 2:
            raise ValueError(f"rows must be a 2-d matrix, got shape {rows.shape}")
        if len(self.names) != rows.shape[0] or len(self.names) != frozen.shape[0]:
            raise ValueError(
                f"size mismatch: {len(self.names)} names, {rows.shape[0]} rows, "
                f"{frozen.shape[0]} frozen flags"
            )
        rows.setflags(write=False)
        frozen.setflags(write=False)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "frozen", frozen)

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def __len__(self) -> int:
        return len(self.names)

    def row(self, name: str) -> np.ndarray:
        return self.rows[self.names.index(name)]


def semantic_init(
    time_string: str, tokenizer: TokenizerSpec, base: EmbeddingTable
) -> np.ndarray:
    """Mean of the base embeddings of the ids tokenizing `time_string`.

    The mean runs over the set of produced ids (duplicates counted once) and is
    computed in float64. Raises EmptyTokenizationError when no ids are
    produced and UnknownTokenIdError when an id falls outside the table.
    """
    ids = tokenizer.encode(time_string)
    if not ids:
        raise EmptyTokenizationError(f"no token ids for {time_string!r}")
    unique: list[int] = sorted(set(int(u) for u in ids))
    for u in unique:
        if not 0 <= u < len(base):
            raise UnknownTokenIdError(
                f"token id {u} outside table of {len(base)} rows"
            )
    return base.rows[unique].astype(np.float64).mean(axis=0)


def build_timestamp_embeddings(
    vocab: TimestampVocab, tokenizer: TokenizerSpec, base: EmbeddingTable
) -> EmbeddingTable:
    """Extend `base` with one semantically initialized row per timestamp token.

    Each new row is semantic_init of the token's bare numeric string (no angle
    brackets); all new rows are frozen. Base rows are copied unchanged.
    """
    new_rows = []
    for token in vocab.tokens:
        try:
            new_rows.append(semantic_init(token.numeric_string, tokenizer, base))
        except ValueError as exc:
            raise type(exc)(f"initializing {token.surface}: {exc}") from exc
    stacked = (
        np.array(new_rows, dtype=np.float32).reshape(len(new_rows), base.dim)
        if new_rows
        else np.zeros((0, base.dim), dtype=np.float32)
    )
    return EmbeddingTable(
        names=base.names + tuple(token.surface for token in vocab.tokens),
        rows=np.concatenate([base.rows, stacked], axis=0),
        frozen=np.concatenate([base.frozen, np.ones(len(new_rows), dtype=bool)]),
    )


def names_sidecar_path(table_path: str) -> str:
    return f"{table_path}.names"


def write_table(table: EmbeddingTable, path: str) -> None:
    """Write the binary table to `path` and its surfaces to `path`.names."""
    for name in table.names:
        if "\n" in name or "\r" in name:
            raise ValueError(f"token surface {name!r} cannot contain line breaks")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TPEB_MAGIC, TPEB_VERSION, len(table), table.dim))
        fh.write(table.rows.astype("<f4").tobytes(order="C"))
        fh.write(table.frozen.astype(np.uint8).tobytes())
    with open(names_sidecar_path(path), "w", encoding="utf-8") as fh:
        for name in table.names:
            fh.write(name + "\n")


def read_table(path: str) -> EmbeddingTable:
    """Read a binary table written by write_table, validating its layout."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise CorruptTableError(f"{path}: shorter than the fixed header")
    magic, version, vocab_size, dim = _HEADER.unpack_from(blob, 0)
    if magic != TPEB_MAGIC:
        raise CorruptTableError(f"{path}: bad magic {magic!r}")
    if version != TPEB_VERSION:
        raise CorruptTableError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + vocab_size * dim * 4 + vocab_size
    if len(blob) != expected:
        raise CorruptTableError(
            f"{path}: expected {expected} bytes for {vocab_size}x{dim}, got {len(blob)}"
        )
    offset = _HEADER.size
    rows = np.frombuffer(
        blob, dtype="<f4", count=vocab_size * dim, offset=offset
    ).reshape(vocab_size, dim)
    flag_bytes = blob[offset + vocab_size * dim * 4 :]
    if any(b not in (0, 1) for b in flag_bytes):
        raise CorruptTableError(f"{path}: frozen flags must be 0 or 1")
    with open(names_sidecar_path(path), "r", encoding="utf-8") as fh:
        names = [line.rstrip("\n") for line in fh]
    if len(names) != vocab_size:
        raise CorruptTableError(
            f"{path}: sidecar lists {len(names)} names for {vocab_size} rows"
        )
    return EmbeddingTable(
        names=tuple(names),
        rows=rows.copy(),
        frozen=np.frombuffer(flag_bytes, dtype=np.uint8).astype(bool),
    )


def char_tokenizer_for(names: Iterable[str]) -> CharTokenizer:
    """CharTokenizer whose vocabulary is every single-character token name."""
    return CharTokenizer(
        {name: idx for idx, name in enumerate(names) if len(name) == 1}
    )
