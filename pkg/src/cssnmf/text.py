"""Ratings-corpus ingestion: tokenizing, TF-IDF weighting, and rating-balanced
subsampling.

A corpus is a list of (id, text, rating) records.  The pipeline lowercases,
splits on non-alphanumeric characters, drops single-character tokens and
stopwords, filters terms by document frequency, applies smoothed idf
weights to raw term counts, and l1-normalizes each document row.  The
stopword list ships with the package as a versioned data file so results
are reproducible across installations.
"""

import csv
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = [
    "RatedDocument",
    "RatedCorpus",
    "Vocabulary",
    "TfidfConfig",
    "DocumentTermMatrix",
    "stopword_set",
    "tokenize",
    "build_tfidf",
    "balance",
    "vectorize_new",
    "interval_index",
    "load_corpus",
    "save_vectorizer",
    "load_vectorizer",
]

# A token is a maximal alphanumeric run of length >= 2 (underscore excluded).
_TOKEN = re.compile(r"[^\W_]{2,}")

STOPWORD_LISTS = ("english", "none")


@dataclass(frozen=True)
class RatedDocument:
    id: str
    text: str
    rating: float = None


@dataclass
class RatedCorpus:
    """Corpus records; present ratings must lie in the closed rating range."""

    entries: list
    rating_range: tuple = (1.0, 5.0)

    def __post_init__(self):
        lo, hi = self.rating_range
        for e in self.entries:
            if e.rating is not None and not lo <= e.rating <= hi:
                raise ValueError(
                    f"document {e.id!r} has rating {e.rating!r} outside [{lo}, {hi}]"
                )

    def __len__(self):
        return len(self.entries)

    def ratings(self):
        out = []
        for e in self.entries:
            if e.rating is None:
                raise ValueError(f"document {e.id!r} has no rating")
            out.append(e.rating)
        return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class Vocabulary:
    """Lexicographically sorted term list with its inverse lookup."""

    terms: tuple
    index: dict = field(hash=False, compare=False, default=None)

    @classmethod
    def from_terms(cls, terms):
        ordered = tuple(sorted(terms))
        if len(set(ordered)) != len(ordered):
            raise ValueError("vocabulary terms must be unique")
        return cls(terms=ordered, index={t: j for j, t in enumerate(ordered)})

    def __len__(self):
        return len(self.terms)

    def __contains__(self, term):
        return term in self.index


@dataclass(frozen=True)
class TfidfConfig:
    min_df: float = 0.01
    max_df: float = 0.15
    stopwords: str = "english"
    lowercase: bool = True
    norm: str = "l1"

    def __post_init__(self):
        if not 0 <= self.min_df <= 1 or not 0 < self.max_df <= 1:
            raise ValueError(
                f"df bounds must be fractions, got min_df={self.min_df}, max_df={self.max_df}"
            )
        if self.min_df > self.max_df:
            raise ValueError(f"min_df={self.min_df} exceeds max_df={self.max_df}")
        if self.stopwords not in STOPWORD_LISTS:
            raise ValueError(
                f"stopwords must be one of {STOPWORD_LISTS}, got {self.stopwords!r}"
            )
        if self.norm != "l1":
            raise ValueError(f"only l1 normalization is supported, got {self.norm!r}")

    def as_dict(self):
        return {
            "min_df": self.min_df,
            "max_df": self.max_df,
            "stopwords": self.stopwords,
            "lowercase": self.lowercase,
            "norm": self.norm,
        }


@dataclass
class DocumentTermMatrix:
    """TF-IDF matrix plus everything needed to vectorize unseen documents.

    ``zero_rows`` lists documents whose tokens all fell outside the
    vocabulary; their rows are all zeros and are legal model input.
    """

    X: np.ndarray
    vocab: Vocabulary
    doc_ids: list
    idf: np.ndarray
    zero_rows: list


@lru_cache(maxsize=None)
def stopword_set(name):
    """Load a named stopword list shipped with the package."""
    if name == "none":
        return frozenset()
    if name != "english":
        raise ValueError(f"unknown stopword list {name!r}")
    text = resources.files("cssnmf.data").joinpath("stopwords_english.txt").read_text("utf-8")
    words = [ln.strip() for ln in text.splitlines()]
    return frozenset(w for w in words if w and not w.startswith("#"))


def tokenize(text, cfg):
    """Split text into terms: alphanumeric runs of length >= 2, lowercased
    when configured, with stopwords removed."""
    if cfg.lowercase:
        text = text.lower()
    stop = stopword_set(cfg.stopwords)
    return [t for t in _TOKEN.findall(text) if t not in stop]


def _row_from_counts(counts, vocab, idf):
    """One l1-normalized tf-idf row; returns (row, is_zero)."""
    x = np.zeros(len(vocab))
    for term, tf in counts.items():
        j = vocab.index.get(term)
        if j is not None:
            x[j] = tf * idf[j]
    s = x.sum()
    if s > 0:
        x /= s
        return x, False
    return x, True


def build_tfidf(corpus, cfg):
    """Vectorize a corpus.

    Terms are kept when their document frequency df satisfies
    ``ceil(min_df * n) <= df <= floor(max_df * n)``.  Weights are raw term
    count times the smoothed idf ``ln((1 + n) / (1 + df)) + 1``, and each
    nonzero row is l1-normalized.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    n = len(corpus)
    doc_counts = []
    df = Counter()
    for e in corpus.entries:
        counts = Counter(tokenize(e.text, cfg))
        doc_counts.append(counts)
        df.update(counts.keys())
    # The 1e-9 nudges only absorb representation error in the fraction
    # products (e.g. 0.2 * 5 landing a hair above 1.0).
    lo = math.ceil(cfg.min_df * n - 1e-9)
    hi = math.floor(cfg.max_df * n + 1e-9)
    kept = [t for t, c in df.items() if lo <= c <= hi]
    if not kept:
        raise ValueError(
            f"empty vocabulary: no term has document frequency in [{lo}, {hi}] "
            f"across {n} documents (min_df={cfg.min_df}, max_df={cfg.max_df})"
        )
    vocab = Vocabulary.from_terms(kept)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in vocab.terms])
    X = np.zeros((n, len(vocab)))
    zero_rows = []
    for i, counts in enumerate(doc_counts):
        X[i], is_zero = _row_from_counts(counts, vocab, idf)
        if is_zero:
            zero_rows.append(i)
    return DocumentTermMatrix(
        X=X,
        vocab=vocab,
        doc_ids=[e.id for e in corpus.entries],
        idf=idf,
        zero_rows=zero_rows,
    )


def vectorize_new(doc, vocab, cfg, idf):
    """Vectorize one unseen document against a fitted vocabulary.

    Out-of-vocabulary tokens are dropped; a document with no known tokens
    maps to the zero vector.
    """
    idf = np.asarray(idf, dtype=float)
    if idf.shape[0] != len(vocab):
        raise ValueError(f"idf has {idf.shape[0]} entries for {len(vocab)} terms")
    counts = Counter(tokenize(doc, cfg))
    x, _ = _row_from_counts(counts, vocab, idf)
    return x


def interval_index(value, edges):
    """Index of the rating interval containing ``value``.

    Intervals are half-open [a, b) except the last, which is closed so the
    top rating is not orphaned.  Values outside every interval raise.
    """
    for k in range(len(edges) - 1):
        lo, hi = edges[k], edges[k + 1]
        if lo <= value < hi or (k == len(edges) - 2 and value == hi):
            return k
    raise ValueError(f"value {value!r} falls outside intervals over {list(edges)}")


def balance(corpus, edges, seed):
    """Subsample so every rating interval contributes the same count.

    The per-interval count is the smallest interval population; sampling is
    without replacement and deterministic in the seed.  Output preserves
    interval order, then sampled order.
    """
    edges = list(edges)
    if len(edges) < 2 or any(a >= b for a, b in zip(edges, edges[1:])):
        raise ValueError(f"edges must be strictly ascending, got {edges}")
    buckets = [[] for _ in range(len(edges) - 1)]
    for i, e in enumerate(corpus.entries):
        if e.rating is None:
            raise ValueError(f"document {e.id!r} has no rating; cannot balance")
        buckets[interval_index(e.rating, edges)].append(i)
    for k, b in enumerate(buckets):
        if not b:
            lo, hi = edges[k], edges[k + 1]
            closer = "]" if k == len(buckets) - 1 else ")"
            raise ValueError(f"rating interval [{lo}, {hi}{closer} is empty")
    take = min(len(b) for b in buckets)
    rng = np.random.default_rng(seed)
    chosen = []
    for b in buckets:
        picks = rng.choice(len(b), size=take, replace=False)
        chosen.extend(b[p] for p in picks)
    entries = [corpus.entries[i] for i in chosen]
    return RatedCorpus(entries=entries, rating_range=corpus.rating_range)


def load_corpus(path, rating_range=(1.0, 5.0), require_rating=True):
    """Read a corpus from CSV (columns id, text, rating) or JSON-lines
    (objects with the same fields).  The rating field may be absent when
    ``require_rating`` is false."""
    path = str(path)
    entries = []
    if path.endswith((".jsonl", ".ndjson")):
        with open(path, "r", encoding="utf-8") as fh:
            for k, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as err:
                    raise ValueError(f"{path}: line {k} is not valid JSON: {err}") from None
                entries.append(_entry_from_record(obj, path, k, require_rating))
    else:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise ValueError(f"{path}: empty corpus file")
            missing = {"id", "text"} - set(reader.fieldnames)
            if missing:
                raise ValueError(f"{path}: missing columns {sorted(missing)}")
            for k, rec in enumerate(reader, start=2):
                entries.append(_entry_from_record(rec, path, k, require_rating))
    if not entries:
        raise ValueError(f"{path}: corpus is empty")
    return RatedCorpus(entries=entries, rating_range=rating_range)


def _entry_from_record(rec, path, lineno, require_rating):
    try:
        doc_id = str(rec["id"])
        text = str(rec["text"])
    except KeyError as err:
        raise ValueError(f"{path}: record {lineno} lacks field {err}") from None
    raw = rec.get("rating")
    if raw is None or raw == "":
        if require_rating:
            raise ValueError(f"{path}: record {lineno} lacks a rating")
        rating = None
    else:
        try:
            rating = float(raw)
        except (TypeError, ValueError):
            raise ValueError(
                f"{path}: record {lineno} has non-numeric rating {raw!r}"
            ) from None
    return RatedDocument(id=doc_id, text=text, rating=rating)


VECTORIZER_VERSION = 1


def save_vectorizer(path, dtm, cfg):
    """Persist vocabulary, idf, and the vectorizer settings as JSON."""
    doc = {
        "version": VECTORIZER_VERSION,
        "config": cfg.as_dict(),
        "vocabulary": list(dtm.vocab.terms),
        "idf": [float(v) for v in dtm.idf],
        "doc_ids": list(dtm.doc_ids),
        "zero_rows": list(dtm.zero_rows),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_vectorizer(path):
    """Read a vectorizer JSON back as ``(Vocabulary, idf, TfidfConfig)``."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != VECTORIZER_VERSION:
        raise ValueError(f"unsupported vectorizer version {doc.get('version')!r}")
    vocab = Vocabulary.from_terms(doc["vocabulary"])
    idf = np.asarray(doc["idf"], dtype=float)
    cfg = TfidfConfig(**doc["config"])
    if idf.shape[0] != len(vocab):
        raise ValueError("vectorizer document is inconsistent: idf/vocabulary sizes disagree")
    return vocab, idf, cfg
