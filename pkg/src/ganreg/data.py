"""Corpus and embedding I/O, tokenization, document encoding, and the
synthetic benchmark corpus.

File formats
------------
Embedding file: one record per line, ``token v1 v2 ... vN`` separated by
single spaces; tokens match ``[^ \\t\\n]+``; the dimension is fixed by the
first line.  Corpus file: UTF-8 TSV, ``label<TAB>text`` per line; an empty
label field marks an unlabeled example; labels are decimal reals.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .layers import EmbeddingTable
from .tensor import Tensor

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# 17 significant digits round-trip any 64-bit real exactly.
LABEL_FORMAT = "{:.17g}"


class CorpusFormatError(ValueError):
    """Malformed corpus or embedding file; message carries the line number."""


@dataclass
class Vocabulary:
    id_to_token: list[str]
    token_to_id: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_to_id:
            self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def from_tokens(cls, tokens: list[str]) -> "Vocabulary":
        return cls(id_to_token=[PAD_TOKEN, UNK_TOKEN, *tokens])


@dataclass
class Example:
    tokens: list[str]
    label: float | None = None
    line_no: int | None = None


@dataclass
class CorpusSplit:
    labeled: list[Example]
    unlabeled: list[Example]
    validation: list[Example]


@dataclass
class EncodedDataset:
    """Fixed-length id matrix plus labels (None for the unlabeled pool)."""

    ids: np.ndarray                 # [n, D] int64
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return self.ids.shape[0]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation per token."""
    out = []
    for raw in text.lower().split():
        token = _strip_punct(raw)
        if token:
            out.append(token)
    return out


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def encode_document(tokens: list[str], vocab: Vocabulary, doc_len: int) -> np.ndarray:
    """Map tokens to ids, truncating from the front / right-padding to doc_len."""
    if doc_len < 1:
        raise ValueError("doc_len must be >= 1")
    ids = [vocab.lookup(t) for t in tokens[:doc_len]]
    ids.extend([PAD_ID] * (doc_len - len(ids)))
    return np.asarray(ids, dtype=np.int64)


def encode_dataset(examples: list[Example], vocab: Vocabulary, doc_len: int,
                   require_labels: bool = False) -> EncodedDataset:
    ids = np.stack([encode_document(e.tokens, vocab, doc_len) for e in examples]) \
        if examples else np.zeros((0, doc_len), dtype=np.int64)
    labels = None
    if examples and examples[0].label is not None:
        labels = np.asarray([e.label for e in examples], dtype=np.float64)
    if require_labels and labels is None:
        raise ValueError("dataset must be labeled")
    return EncodedDataset(ids=ids, labels=labels)


def load_embeddings(path) -> tuple[Vocabulary, EmbeddingTable]:
    """Read a text embedding file into (vocabulary, table).

    File tokens take ids 2.. in file order; PAD gets the zero vector and UNK
    the arithmetic mean of all loaded vectors.
    """
    tokens: list[str] = []
    vectors: list[np.ndarray] = []
    dim = None
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) < 2:
                raise CorpusFormatError(f"{path}:{line_no}: expected 'token values...'")
            token = parts[0]
            if token in seen:
                raise CorpusFormatError(f"{path}:{line_no}: duplicate token {token!r}")
            seen.add(token)
            try:
                vec = np.asarray([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{line_no}: unparsable value ({exc})") from None
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise CorpusFormatError(
                    f"{path}:{line_no}: dimension {vec.size} != {dim} from first line"
                )
            tokens.append(token)
            vectors.append(vec)
    if not tokens:
        raise CorpusFormatError(f"{path}: empty embedding file")
    stack = np.stack(vectors)
    matrix = np.zeros((len(tokens) + 2, dim), dtype=np.float64)
    matrix[UNK_ID] = stack.mean(axis=0)
    matrix[2:] = stack
    vocab = Vocabulary.from_tokens(tokens)
    return vocab, EmbeddingTable(matrix=Tensor(matrix, requires_grad=True))


def load_corpus(path) -> tuple[list[Example], list[Example]]:
    """Read a TSV corpus, partitioning by label presence.

    Examples that tokenize to nothing are dropped and counted in a warning.
    """
    labeled: list[Example] = []
    unlabeled: list[Example] = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if "\t" not in line:
                raise CorpusFormatError(f"{path}:{line_no}: missing TAB separator")
            label_field, text = line.split("\t", 1)
            tokens = tokenize(text)
            if not tokens:
                dropped += 1
                continue
            if label_field == "":
                unlabeled.append(Example(tokens=tokens, label=None, line_no=line_no))
            else:
                try:
                    label = float(label_field)
                except ValueError:
                    raise CorpusFormatError(
                        f"{path}:{line_no}: unparsable label {label_field!r}"
                    ) from None
                labeled.append(Example(tokens=tokens, label=label, line_no=line_no))
    if dropped:
        logger.warning("%s: dropped %d example(s) with no tokens", path, dropped)
    return labeled, unlabeled


def write_corpus(path, examples: list[Example]) -> None:
    """Write examples as TSV; labels serialized at 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in examples:
            label = "" if e.label is None else LABEL_FORMAT.format(e.label)
            fh.write(f"{label}\t{' '.join(e.tokens)}\n")


def write_embeddings(path, vocab: Vocabulary, table: EmbeddingTable) -> None:
    """Write the non-reserved rows back out in loadable form."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(2, len(vocab)):
            values = " ".join(LABEL_FORMAT.format(v) for v in table.matrix.data[i])
            fh.write(f"{vocab.id_to_token[i]} {values}\n")


# -- synthetic benchmark ---------------------------------------------------------

_NUMBER_WORDS = ["zero", "one", "two", "three", "four",
                 "five", "six", "seven", "eight", "nine"]
SYNTH_EMBED_DIM = 8


def synth_corpus(n_labeled: int, n_unlabeled: int, n_validation: int,
                 doc_len: int = 12, noise_sigma: float = 0.1,
                 seed: int = 0) -> tuple[CorpusSplit, Vocabulary, EmbeddingTable]:
    """Number-word corpus whose label is the mean word value plus noise.

    Documents are ``doc_len`` uniform draws from "zero".."nine"; the label of
    a document is the mean of the word values plus Gaussian(0, noise_sigma).
    Embeddings are random 8-dim unit-scale vectors that carry the word value
    in one planted direction, so the label is an exact affine function of the
    mean-pooled embedding when noise_sigma is zero.
    """
    if min(n_labeled, n_unlabeled, n_validation) < 0:
        raise ValueError("corpus sizes must be >= 0")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)

    values = np.arange(10, dtype=np.float64)
    direction = rng.standard_normal(SYNTH_EMBED_DIM)
    direction /= np.linalg.norm(direction)
    base = rng.normal(0.0, 0.35, size=(10, SYNTH_EMBED_DIM))
    base -= np.outer(base @ direction, direction)
    planted = base + np.outer((values - 4.5) / 4.5, direction)

    matrix = np.zeros((12, SYNTH_EMBED_DIM), dtype=np.float64)
    matrix[UNK_ID] = planted.mean(axis=0)
    matrix[2:] = planted
    vocab = Vocabulary.from_tokens(list(_NUMBER_WORDS))
    table = EmbeddingTable(matrix=Tensor(matrix, requires_grad=True))

    def draw(count: int, with_labels: bool) -> list[Example]:
        out = []
        for _ in range(count):
            words = rng.integers(0, 10, size=doc_len)
            label = None
            if with_labels:
                label = float(words.mean())
                if noise_sigma > 0:
                    label += float(rng.normal(0.0, noise_sigma))
            out.append(Example(tokens=[_NUMBER_WORDS[w] for w in words], label=label))
        return out

    split = CorpusSplit(
        labeled=draw(n_labeled, True),
        unlabeled=draw(n_unlabeled, False),
        validation=draw(n_validation, True),
    )
    return split, vocab, table


def predict_mean_mae(doc_len: int, noise_sigma: float, n_draws: int = 1_000_000,
                     seed: int = 12345) -> float:
    """Monte-Carlo estimate of the predict-global-mean baseline MAE.

    Estimates E|mean(words) + noise - 4.5| for documents of uniform word
    values 0..9; the independent yardstick for learning-sanity checks.
    """
    rng = np.random.default_rng(seed)
    means = rng.integers(0, 10, size=(n_draws, doc_len)).mean(axis=1)
    if noise_sigma > 0:
        means = means + rng.normal(0.0, noise_sigma, size=n_draws)
    return float(np.mean(np.abs(means - 4.5)))
