from pathlib import Path

import numpy as np
import pytest

from opseq.corpus import OpcodeSequence, Vocabulary

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


def toy_vocab(mnemonics: list[str]) -> Vocabulary:
    """Vocabulary with ids in the given order (rank order assumed)."""
    return Vocabulary(
        M=len(mnemonics),
        rank_to_mnemonic=list(mnemonics),
        mnemonic_to_id={m: i for i, m in enumerate(mnemonics)},
        frequencies=[100.0 / len(mnemonics)] * len(mnemonics),
    )


def id_vocab(M: int) -> Vocabulary:
    return toy_vocab([f"op{j:02d}" for j in range(M)])


def id_seq(tokens, sample_id="s", family="fam") -> OpcodeSequence:
    return OpcodeSequence(sample_id, family, [int(t) for t in tokens])


def random_stochastic(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Independent row-stochastic matrix for oracle tests (Dirichlet rows)."""
    return rng.dirichlet(np.ones(cols), size=rows)
