"""Opcode corpora: listing parsing, vocabularies, filtering, scrambling,
and synthetic corpus generation.

A corpus is a set of per-sample opcode sequences plus a JSON manifest:

    {"families": ["fam_a", ...],
     "entries": [{"id": "s0001", "family": "fam_a", "path": "s0001.ops"}, ...]}

Sequence files hold one token per line (UTF-8) with optional ``#`` comment
lines; a ``# format: ids`` header switches the token column from mnemonics
to integer ids.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, EmptyAfterFilterError, ParseError
from .seeding import derive_seed

log = logging.getLogger(__name__)

# Shortest filtered sequence admitted to feature training. Shorter samples
# are skipped with a warning by the loading helpers.
MIN_ADMITTED_LENGTH = 10

# Instruction prefixes emitted as their own opcode token.
PREFIX_TOKENS = frozenset({"rep", "repe", "repz", "repne", "repnz", "lock", "bnd"})

_INSTR_LINE = re.compile(r"^\s*([0-9a-fA-F]+):(.*)$")
_HEX_BYTE = re.compile(r"^[0-9a-fA-F]{2}$")


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _read_json(path) -> dict:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc


@dataclass
class RawListing:
    """One disassembly listing: the raw text input for a sample."""

    sample_id: str
    family: str
    text: str


@dataclass
class OpcodeSequence:
    """Ordered opcode tokens for one sample.

    ``tokens`` holds mnemonic strings before vocabulary filtering and
    integer ids in [0, M) afterwards.
    """

    sample_id: str
    family: str
    tokens: list

    @property
    def length(self) -> int:
        return len(self.tokens)

    def ids(self) -> np.ndarray:
        """Tokens as an int64 array; valid only post-filter."""
        if self.tokens and not isinstance(self.tokens[0], (int, np.integer)):
            raise DataError(f"sequence {self.sample_id!r} holds mnemonics, not ids")
        return np.asarray(self.tokens, dtype=np.int64)


@dataclass
class Vocabulary:
    """Frequency-ranked opcode alphabet of size M.

    Ids 0..M-1 are assigned in non-increasing global frequency order with
    lexicographic tie-breaking, so id 0 is always the most frequent opcode
    in the corpus the vocabulary was built from.
    """

    M: int
    rank_to_mnemonic: list[str]
    mnemonic_to_id: dict[str, int]
    frequencies: list[float]  # percentage of all tokens, per retained opcode

    def __post_init__(self):
        if len(self.rank_to_mnemonic) != self.M or len(self.frequencies) != self.M:
            raise DataError("vocabulary rank list does not match M")

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "rank_to_mnemonic": self.rank_to_mnemonic,
            "frequencies": self.frequencies,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        ranks = list(d["rank_to_mnemonic"])
        return cls(
            M=int(d["M"]),
            rank_to_mnemonic=ranks,
            mnemonic_to_id={m: i for i, m in enumerate(ranks)},
            frequencies=[float(x) for x in d["frequencies"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_dict(_read_json(path))


@dataclass
class ManifestEntry:
    sample_id: str
    family: str
    path: str


@dataclass
class CorpusManifest:
    families: list[str]
    entries: list[ManifestEntry] = field(default_factory=list)

    def validate(self, base_dir: Path | None = None, check_paths: bool = True) -> None:
        seen = set()
        for e in self.entries:
            if not e.sample_id:
                raise DataError("manifest entry with empty sample_id")
            if e.sample_id in seen:
                raise DataError(f"duplicate sample_id {e.sample_id!r} in manifest")
            seen.add(e.sample_id)
            if e.family not in self.families:
                raise DataError(f"entry {e.sample_id!r} has unknown family {e.family!r}")
            if check_paths and not self.resolve(e, base_dir).exists():
                raise DataError(f"entry {e.sample_id!r} references missing file {e.path!r}")

    @staticmethod
    def resolve(entry: ManifestEntry, base_dir: Path | None) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        return p

    def to_dict(self) -> dict:
        return {
            "families": self.families,
            "entries": [
                {"id": e.sample_id, "family": e.family, "path": e.path} for e in self.entries
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path, check_paths: bool = True) -> "CorpusManifest":
        path = Path(path)
        d = _read_json(path)
        m = cls(
            families=list(d["families"]),
            entries=[
                ManifestEntry(str(e["id"]), str(e["family"]), str(e["path"]))
                for e in d["entries"]
            ],
        )
        m.validate(base_dir=path.parent, check_paths=check_paths)
        return m


def parse_disassembly(listing: RawListing, malformed_tolerance: float = 0.0) -> OpcodeSequence:
    """Extract the mnemonic token stream from a disassembly listing.

    An instruction line is ``<hex address>: <hex byte pairs> <mnemonic>
    [operands]``; anything else (section headers, symbol labels, blank
    lines) contributes nothing. Raw bytes are exactly-two-digit hex tokens.
    Leading instruction prefixes (``rep``, ``lock``, ...) are emitted as
    their own token before the mnemonic; operands are dropped. Mnemonics
    are lowercased.

    Lines that look instruction-like but yield no mnemonic (for example,
    byte-only continuation lines) count as malformed; if their fraction of
    all instruction-like lines exceeds ``malformed_tolerance`` a ParseError
    naming the first offending line is raised.
    """
    tokens: list[str] = []
    instruction_like = 0
    malformed = 0
    first_bad_line = None
    for lineno, line in enumerate(listing.text.splitlines(), start=1):
        m = _INSTR_LINE.match(line)
        if not m:
            continue
        instruction_like += 1
        parts = m.group(2).replace("\t", " ").split()
        idx = 0
        while idx < len(parts) and _HEX_BYTE.match(parts[idx]):
            idx += 1
        if idx == len(parts):
            malformed += 1
            if first_bad_line is None:
                first_bad_line = lineno
            continue
        while idx < len(parts) and parts[idx].lower() in PREFIX_TOKENS:
            tokens.append(parts[idx].lower())
            idx += 1
        if idx < len(parts):
            tokens.append(parts[idx].lower())
    if instruction_like and malformed / instruction_like > malformed_tolerance:
        raise ParseError(
            f"{listing.sample_id}: {malformed} instruction-like line(s) with no mnemonic, "
            f"first at line {first_bad_line}",
            line_number=first_bad_line,
        )
    return OpcodeSequence(listing.sample_id, listing.family, tokens)


def render_listing(seq: OpcodeSequence, vocab: Vocabulary | None = None) -> str:
    """Render a token sequence as a minimal disassembly listing.

    Inverse of :func:`parse_disassembly` for synthetic data: parsing the
    rendered text returns the identical token list. Sequences holding ids
    need a vocabulary to recover mnemonics.
    """
    lines = [f"{seq.sample_id} <{seq.family}>:"]
    addr = 0x401000
    for tok in seq.tokens:
        if isinstance(tok, (int, np.integer)):
            if vocab is None:
                raise DataError("rendering an id sequence requires a vocabulary")
            tok = vocab.rank_to_mnemonic[int(tok)]
        if _HEX_BYTE.match(tok):
            raise DataError(f"token {tok!r} is ambiguous with a raw byte")
        lines.append(f"  {addr:x}:\t90                   \t{tok}")
        addr += 1
    return "\n".join(lines) + "\n"


def build_vocabulary(sequences: list[OpcodeSequence], M: int) -> Vocabulary:
    """Rank mnemonics by global corpus frequency and retain the top M.

    Counts are case-folded and pooled over all sequences; ties are broken
    lexicographically. Frequencies are percentages of the grand token
    total, so the retained subset sums to at most 100.
    """
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    counts: Counter = Counter()
    for seq in sequences:
        counts.update(tok.lower() for tok in seq.tokens)
    if len(counts) < M:
        raise DataError(
            f"corpus has only {len(counts)} distinct mnemonics, cannot build a vocabulary of {M}"
        )
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:M]
    mnemonics = [m for m, _ in ranked]
    return Vocabulary(
        M=M,
        rank_to_mnemonic=mnemonics,
        mnemonic_to_id={m: i for i, m in enumerate(mnemonics)},
        frequencies=[100.0 * c / total for _, c in ranked],
    )


def filter_sequence(seq: OpcodeSequence, vocab: Vocabulary) -> OpcodeSequence:
    """Drop out-of-vocabulary tokens and map survivors to ids, preserving order."""
    table = vocab.mnemonic_to_id
    ids = [table[t] for t in (tok.lower() for tok in seq.tokens) if t in table]
    if not ids:
        raise EmptyAfterFilterError(seq.sample_id)
    return OpcodeSequence(seq.sample_id, seq.family, ids)


def scramble(seq: OpcodeSequence, fraction: float, seed: int) -> OpcodeSequence:
    """Shuffle one contiguous block covering ``fraction`` of the sequence.

    The block has length ceil(fraction * length) and starts at an offset
    drawn uniformly over valid positions; tokens outside the block are
    untouched. RNG protocol (the determinism contract): from
    ``numpy.random.default_rng(seed)``, one ``integers`` draw for the
    offset followed by one ``permutation`` of the block.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"scramble fraction must lie in [0, 1], got {fraction}")
    tokens = list(seq.tokens)
    block = math.ceil(fraction * len(tokens))
    if block > 1:
        rng = np.random.default_rng(seed)
        offset = int(rng.integers(0, len(tokens) - block + 1))
        perm = rng.permutation(block)
        tokens[offset : offset + block] = [tokens[offset + int(p)] for p in perm]
    return OpcodeSequence(seq.sample_id, seq.family, tokens)


@dataclass
class FamilyGenerator:
    """Hidden-Markov sequence generator for one synthetic family.

    A plain Markov chain over symbols is recovered by setting B to the
    identity. All rows of A, B, and pi must be stochastic.
    """

    label: str
    A: np.ndarray
    B: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        for name, mat in (("A", self.A), ("B", self.B), ("pi", self.pi[None, :])):
            if np.any(mat < 0) or not np.allclose(mat.sum(axis=1), 1.0, atol=1e-9):
                raise ConfigError(f"generator {self.label!r}: {name} is not row stochastic")
        if self.A.shape[0] != self.A.shape[1] or self.A.shape[0] != self.B.shape[0]:
            raise ConfigError(f"generator {self.label!r}: A/B shapes disagree")
        if self.pi.shape[0] != self.A.shape[0]:
            raise ConfigError(f"generator {self.label!r}: pi length disagrees with A")

    @property
    def n_symbols(self) -> int:
        return self.B.shape[1]

    def sample(self, length: int, rng: np.random.Generator) -> np.ndarray:
        """Draw one symbol sequence of the given length."""
        a_cum = np.cumsum(self.A, axis=1)
        b_cum = np.cumsum(self.B, axis=1)
        pi_cum = np.cumsum(self.pi)
        u = rng.random((length, 2))
        out = np.empty(length, dtype=np.int64)
        state = int(np.searchsorted(pi_cum, u[0, 0]))
        out[0] = np.searchsorted(b_cum[state], u[0, 1])
        for t in range(1, length):
            state = int(np.searchsorted(a_cum[state], u[t, 0]))
            out[t] = np.searchsorted(b_cum[state], u[t, 1])
        return out


def generate_synthetic_corpus(
    family_specs: list[FamilyGenerator],
    samples_per_family: int,
    length_range: tuple[int, int],
    seed: int,
) -> tuple[CorpusManifest, list[OpcodeSequence]]:
    """Sample a labeled corpus of id sequences from per-family generators.

    Lengths are uniform over the inclusive range. Each sample's RNG seed is
    derived from (seed, family index, sample index), so regeneration is
    reproducible sample by sample. Manifest paths follow the file layout
    written by :func:`write_corpus`.
    """
    lo, hi = int(length_range[0]), int(length_range[1])
    if lo < 1 or hi < lo:
        raise ConfigError(f"invalid length range {length_range}")
    if samples_per_family < 1:
        raise ConfigError("samples_per_family must be >= 1")
    labels = [g.label for g in family_specs]
    if len(set(labels)) != len(labels):
        raise ConfigError("family labels must be unique")
    manifest = CorpusManifest(families=labels)
    sequences: list[OpcodeSequence] = []
    for fi, gen in enumerate(family_specs):
        for si in range(samples_per_family):
            rng = np.random.default_rng(derive_seed(seed, fi, si))
            length = int(rng.integers(lo, hi + 1))
            tokens = gen.sample(length, rng)
            sample_id = f"{gen.label}_{si:04d}"
            sequences.append(OpcodeSequence(sample_id, gen.label, [int(t) for t in tokens]))
            manifest.entries.append(ManifestEntry(sample_id, gen.label, f"{sample_id}.ops"))
    return manifest, sequences


def symbol_names(n_symbols: int) -> list[str]:
    """Default mnemonic names for synthetic symbols, ordered by id."""
    return [f"op{j:02d}" for j in range(n_symbols)]


def write_sequence_file(path, seq: OpcodeSequence) -> None:
    fmt = "ids" if seq.tokens and isinstance(seq.tokens[0], (int, np.integer)) else "mnemonics"
    lines = [
        f"# sample_id: {seq.sample_id}",
        f"# family: {seq.family}",
        f"# format: {fmt}",
    ]
    lines.extend(str(tok) for tok in seq.tokens)
    Path(path).write_text("\n".join(lines) + "\n")


def read_sequence_file(path, sample_id: str | None = None, family: str | None = None) -> OpcodeSequence:
    """Read a one-token-per-line sequence file.

    Header comments may carry sample_id, family, and format; explicit
    arguments (typically from a manifest) take precedence.
    """
    path = Path(path)
    meta = {"format": "mnemonics"}
    tokens: list = []
    for raw in _read_text(path).splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, value = body.partition(":")
                meta[key.strip().lower()] = value.strip()
            continue
        tokens.append(line)
    if meta["format"] == "ids":
        try:
            tokens = [int(t) for t in tokens]
        except ValueError as exc:
            raise DataError(f"{path}: id-format file holds a non-integer token") from exc
    elif meta["format"] != "mnemonics":
        raise DataError(f"{path}: unknown sequence format {meta['format']!r}")
    return OpcodeSequence(
        sample_id=sample_id or meta.get("sample_id", path.stem),
        family=family or meta.get("family", "unknown"),
        tokens=tokens,
    )


def write_corpus(
    out_dir,
    manifest: CorpusManifest,
    sequences: list[OpcodeSequence],
    names: list[str] | None = None,
) -> Path:
    """Write sequence files plus manifest.json under out_dir.

    Id sequences are written as mnemonics (via ``names``, defaulting to
    opNN) so that the standard vocabulary pipeline applies to synthetic
    corpora; pass ``names=None`` with mnemonic sequences to write them
    verbatim. Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {e.sample_id: e for e in manifest.entries}
    for seq in sequences:
        entry = by_id.get(seq.sample_id)
        if entry is None:
            raise DataError(f"sequence {seq.sample_id!r} missing from manifest")
        tokens = seq.tokens
        if tokens and isinstance(tokens[0], (int, np.integer)):
            table = names if names is not None else symbol_names(int(max(tokens)) + 1)
            tokens = [table[int(t)] for t in tokens]
        write_sequence_file(out_dir / entry.path, OpcodeSequence(seq.sample_id, seq.family, tokens))
    manifest_path = out_dir / "manifest.json"
    manifest.save(manifest_path)
    return manifest_path


def load_corpus(manifest_path) -> tuple[CorpusManifest, list[OpcodeSequence]]:
    """Load every sequence referenced by a manifest, in manifest order."""
    manifest_path = Path(manifest_path)
    manifest = CorpusManifest.load(manifest_path)
    seqs = [
        read_sequence_file(
            CorpusManifest.resolve(e, manifest_path.parent), sample_id=e.sample_id, family=e.family
        )
        for e in manifest.entries
    ]
    return manifest, seqs


def filter_corpus(
    sequences: list[OpcodeSequence],
    vocab: Vocabulary,
    min_length: int = MIN_ADMITTED_LENGTH,
) -> list[OpcodeSequence]:
    """Filter every sequence, skipping those shorter than min_length after filtering."""
    kept = []
    for seq in sequences:
        try:
            filtered = filter_sequence(seq, vocab)
        except EmptyAfterFilterError:
            log.warning("skipping %s: empty after vocabulary filtering", seq.sample_id)
            continue
        if filtered.length < min_length:
            log.warning(
                "skipping %s: %d tokens after filtering (minimum %d)",
                seq.sample_id,
                filtered.length,
                min_length,
            )
            continue
        kept.append(filtered)
    if not kept:
        raise DataError("no sequence survived vocabulary filtering")
    return kept
