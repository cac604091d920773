"""Word-level vocabulary shared by every language."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from app.core.errors import ConfigurationError, TruncationError

PAD_TOKEN, UNK_TOKEN, MASK_TOKEN = "[PAD]", "[UNK]", "[MASK]"
SPECIAL_TOKENS: Tuple[str, ...] = (PAD_TOKEN, UNK_TOKEN, MASK_TOKEN)
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2
FIRST_REGULAR_ID = len(SPECIAL_TOKENS)


class Vocabulary:
    """Maps surface tokens to ids below ``size``; unused ids are reserved."""

    def __init__(self, tokens: Sequence[str], size: int) -> None:
        if len(tokens) + FIRST_REGULAR_ID > size:
            raise ConfigurationError(
                f"vocabulary needs {len(tokens) + FIRST_REGULAR_ID} ids but vocab_size is {size}"
            )
        self.size = size
        self.tokens: List[str] = list(SPECIAL_TOKENS) + list(tokens)
        self._index: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, tokens: Iterable[str], size: int) -> "Vocabulary":
        return cls(sorted(set(tokens) - set(SPECIAL_TOKENS)), size)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._index.get(tok, UNK_ID) for tok in tokens], dtype=np.int64)

    def oov_count(self, tokens: Sequence[str]) -> int:
        return sum(tok not in self._index for tok in tokens)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(f"{self.size}\n" + "\n".join(self.tokens[FIRST_REGULAR_ID:]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines[1:] if line], int(lines[0]))


def pad_batch(sequences: Sequence[np.ndarray], max_len: int) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences; returns ids and a 0/1 attention mask."""
    longest = max(len(seq) for seq in sequences)
    if longest > max_len:
        raise TruncationError(f"sequence of length {longest} exceeds max_seq_len {max_len}")
    ids = np.full((len(sequences), longest), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(sequences), longest), dtype=np.float64)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = seq
        mask[row, : len(seq)] = 1.0
    return ids, mask
