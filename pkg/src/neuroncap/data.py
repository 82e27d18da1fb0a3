"""Tokenization, vocabulary, fixed-length padding, and dataset handling.

Captions are lowercased, whitespace-tokenized, wrapped in BOS/EOS, and
padded to a fixed total length so every record in a dataset has identical
id-sequence shape.  Dataset files are JSON Lines, one record per line:

    {"unit_id": str, "features": [[float; d]; S], "captions": [str, ...]}

The synthetic generator draws per-record feature grids and derives each
caption deterministically from the grid's mean feature through fixed random
linear maps, so the feature->caption task is learnable by construction.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ParseError, ShapeError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocabulary:
    """Token/id bijection with four reserved ids (PAD=0, BOS=1, EOS=2, UNK=3)."""

    def __init__(self, tokens: Sequence[str], counts: dict[str, int] | None = None):
        self.id_to_token: list[str] = list(RESERVED) + list(tokens)
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise DomainError("vocabulary tokens must be distinct")
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        self.counts: dict[str, int] = dict(counts or {})

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self.id_to_token[idx]

    def most_common(self, k: int) -> list[tuple[str, int]]:
        """Top-k non-reserved tokens by corpus count (count desc, then lexical)."""
        items = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return items[:k]


@dataclass
class CaptionRecord:
    """One caption: raw text, padded token ids, and a real-token mask.

    ids has length pad_len exactly; everything after the first EOS is PAD;
    mask[i] is True iff i <= position of EOS.
    """

    text: str
    ids: list[int]
    mask: list[bool]

    def body_ids(self) -> list[int]:
        """Token ids strictly between BOS and EOS."""
        end = self.ids.index(EOS)
        return self.ids[1:end]


@dataclass
class DatasetRecord:
    """One attended-over unit: id, its S x d feature grid, and its captions."""

    unit_id: str
    features: np.ndarray
    captions: list[CaptionRecord]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ShapeError(f"record {self.unit_id}: features must be a nonempty 2-D grid")
        if not np.isfinite(self.features).all():
            raise DomainError(f"record {self.unit_id}: non-finite feature values")
        if not self.captions:
            raise DomainError(f"record {self.unit_id}: at least one caption required")


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def build_vocab(corpus: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count whitespace tokens; keep those with count >= min_count.

    Kept tokens get dense ids ordered by (count desc, then lexical); rarer
    tokens map to UNK at encode time.
    """
    counts = Counter()
    n_texts = 0
    for text in corpus:
        n_texts += 1
        counts.update(tokenize(text))
    if n_texts == 0:
        raise DomainError("build_vocab: empty corpus")
    kept = [(t, c) for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([t for t, _ in kept], counts=dict(kept))


def encode(text: str, vocab: Vocabulary, pad_len: int) -> CaptionRecord:
    """Encode text as [BOS, tokens..., EOS, PAD...] of total length pad_len.

    Over-long bodies are truncated to pad_len - 2 tokens so BOS/EOS always
    fit.
    """
    if pad_len < 3:
        raise ConfigError(f"encode: pad_len must be >= 3, got {pad_len}")
    body = [vocab.id_of(t) for t in tokenize(text)][: pad_len - 2]
    ids = [BOS] + body + [EOS]
    mask = [True] * len(ids)
    ids += [PAD] * (pad_len - len(ids))
    mask += [False] * (pad_len - len(mask))
    return CaptionRecord(text=text, ids=ids, mask=mask)


def decode_text(ids: Sequence[int], vocab: Vocabulary) -> str:
    """Inverse of encode for in-vocab text: strip specials, join tokens."""
    words = [vocab.token_of(i) for i in ids if i not in (PAD, BOS, EOS)]
    return " ".join(words)


def strip_special(ids: Sequence[int]) -> list[int]:
    """Drop PAD/BOS/EOS, keeping UNK and content tokens."""
    return [i for i in ids if i not in (PAD, BOS, EOS)]


# ---------------------------------------------------------------------------
# file ingestion


def scan_caption_texts(path: str) -> list[str]:
    """All caption strings in a dataset file, for vocabulary building."""
    texts = []
    for record, _ in _iter_raw(path):
        texts.extend(record["captions"])
    return texts


def longest_body_len(paths: Sequence[str]) -> int:
    longest = 0
    for path in paths:
        for record, _ in _iter_raw(path):
            for text in record["captions"]:
                longest = max(longest, len(tokenize(text)))
    return longest


def _iter_raw(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected an object")
            for fld in ("unit_id", "features", "captions"):
                if fld not in obj:
                    raise ParseError(f"{path}:{lineno}: missing '{fld}'")
            if not isinstance(obj["captions"], list) or not obj["captions"]:
                raise ParseError(f"{path}:{lineno}: 'captions' must be a nonempty list")
            if not all(isinstance(c, str) for c in obj["captions"]):
                raise ParseError(f"{path}:{lineno}: captions must be strings")
            yield obj, lineno


def load_dataset(path: str, vocab: Vocabulary, pad_len: int) -> list[DatasetRecord]:
    """Parse and validate a JSON-Lines dataset file into encoded records.

    Feature grids must be rectangular, and feature dimensionality must be
    uniform across the whole file.
    """
    records: list[DatasetRecord] = []
    feature_dim: int | None = None
    for obj, lineno in _iter_raw(path):
        try:
            features = np.asarray(obj["features"], dtype=np.float64)
        except ValueError as exc:
            raise ShapeError(f"{path}:{lineno}: ragged or non-numeric features") from exc
        if features.ndim != 2:
            raise ShapeError(f"{path}:{lineno}: features must be a 2-D grid, got ndim={features.ndim}")
        if feature_dim is None:
            feature_dim = features.shape[1]
        elif features.shape[1] != feature_dim:
            raise ShapeError(
                f"{path}:{lineno}: feature dim {features.shape[1]} != {feature_dim} seen earlier in file"
            )
        captions = [encode(text, vocab, pad_len) for text in obj["captions"]]
        records.append(DatasetRecord(unit_id=str(obj["unit_id"]), features=features, captions=captions))
    return records


def write_dataset(records: Sequence[DatasetRecord], path: str) -> None:
    """Serialize records to JSON Lines (caption text only, not ids)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            line = json.dumps(
                {
                    "unit_id": rec.unit_id,
                    "features": rec.features.tolist(),
                    "captions": [c.text for c in rec.captions],
                },
                separators=(",", ":"),
            )
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass
class SynthSpec:
    """Parameters for the synthetic dataset generator.

    max_len and mean_len describe caption word counts (padding adds BOS/EOS
    on top).  Generation is a pure function of the spec, seed included.
    """

    vocab_size: int = 80
    num_records: int = 256
    max_len: int = 21
    mean_len: int = 4
    feature_grid_size: int = 8
    feature_dim: int = 16
    seed: int = 42

    def __post_init__(self):
        if self.max_len < 4:
            raise ConfigError(f"max_len must be >= 4, got {self.max_len}")
        if not 3 <= self.mean_len <= self.max_len:
            raise ConfigError(f"mean_len must be in [3, max_len], got {self.mean_len}")
        for fld in ("vocab_size", "num_records", "feature_grid_size", "feature_dim"):
            if getattr(self, fld) < 1:
                raise ConfigError(f"{fld} must be positive")

    @property
    def pad_len(self) -> int:
        return self.max_len + 2

    @classmethod
    def from_json(cls, path: str) -> "SynthSpec":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown synth-spec keys: {sorted(unknown)}")
        return cls(**obj)


_CONSONANTS = "bcdfglmnprstvz"
_VOWELS = "aeiou"


def _make_words(n: int, rng: np.random.Generator) -> list[str]:
    """n distinct pronounceable pseudo-words, deterministic under rng."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    limit = len(syllables) ** 2
    if n > limit:
        raise ConfigError(f"vocab_size {n} exceeds generator limit {limit}")
    picks = rng.permutation(limit)[:n]
    return [syllables[p // len(syllables)] + syllables[p % len(syllables)] for p in picks]


def synth_generate(spec: SynthSpec, unit_prefix: str = "unit") -> list[DatasetRecord]:
    """Generate a deterministic, learnable synthetic dataset.

    Per record: an S x d standard-normal feature grid (rounded to 5 decimals
    so the stored file is the exact training input), a caption length drawn
    geometrically around mean_len and clamped to [1, max_len], and caption
    words chosen by argmax of fixed per-position random linear maps applied
    to the grid's mean feature.  The first record is forced to max_len so
    the requested longest length is realized.
    """
    rng = np.random.default_rng(spec.seed)
    words = _make_words(spec.vocab_size, rng)
    position_maps = rng.standard_normal((spec.max_len, spec.vocab_size, spec.feature_dim))

    lengths = np.clip(rng.geometric(1.0 / spec.mean_len, size=spec.num_records), 1, spec.max_len)
    lengths[0] = spec.max_len

    texts: list[str] = []
    grids: list[np.ndarray] = []
    for j in range(spec.num_records):
        grid = np.round(rng.standard_normal((spec.feature_grid_size, spec.feature_dim)), 5)
        mean_feature = grid.mean(axis=0)
        chosen = [words[int(np.argmax(position_maps[p] @ mean_feature))] for p in range(int(lengths[j]))]
        grids.append(grid)
        texts.append(" ".join(chosen))

    vocab = build_vocab(texts, min_count=1)
    return [
        DatasetRecord(
            unit_id=f"{unit_prefix}_{j:05d}",
            features=grids[j],
            captions=[encode(texts[j], vocab, spec.pad_len)],
        )
        for j in range(spec.num_records)
    ]


# ---------------------------------------------------------------------------
# splitting and statistics


def split(
    records: Sequence[DatasetRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[DatasetRecord], list[DatasetRecord], list[DatasetRecord]]:
    """Deterministic shuffled partition into (train, val, test).

    Val/test sizes round down; the remainder goes to train.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    if any(r < 0 for r in ratios):
        raise ConfigError(f"split ratios must be nonnegative, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(records))
    n = len(records)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    shuffled = [records[i] for i in order]
    return shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :]


def dataset_stats(records: Sequence[DatasetRecord]) -> dict:
    """Realized corpus statistics: counts, length distribution, top tokens."""
    lengths = []
    counts = Counter()
    for rec in records:
        for cap in rec.captions:
            toks = tokenize(cap.text)
            lengths.append(len(toks))
            counts.update(toks)
    if not lengths:
        raise DomainError("dataset_stats: no captions")
    mode_len, mode_hits = Counter(lengths).most_common(1)[0]
    return {
        "records": len(records),
        "longest_len": max(lengths),
        "average_len": round(sum(lengths) / len(lengths), 2),
        "mode_len": mode_len,
        "mode_occurrences": mode_hits,
        "top_tokens": [t for t, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:10]],
    }


def format_stats(stats: dict) -> str:
    rows = [
        ("Data Amount", str(stats["records"])),
        ("Longest Sequence Length", str(stats["longest_len"])),
        ("Average Sequence Length", f"{stats['average_len']:g}"),
        ("Most Appeared Seq. Length", str(stats["mode_len"])),
        ("Occurrences of Most Appeared Length", f"{stats['mode_occurrences']} times"),
        ("Top 10 Word Occurrences", "[" + ", ".join(stats["top_tokens"]) + "]"),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name:<{width}}  {val}" for name, val in rows)
