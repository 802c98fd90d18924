"""
Corpus Sources

Synthetic keyword corpora for desk-scale runs, plus a loader for real
corpora in JSONL form ({"text": ..., "label": ...} per line).
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.errors import CorpusFormatError, EmptyInputError
from app.models.sample import LabeledCorpus, LabeledDocument

logger = logging.getLogger(__name__)

MAX_KEYWORDS_PER_CLASS = 6


def generate_synthetic_corpus(
    num_classes: int,
    docs_per_class: int,
    vocab_size: int,
    seed: int = 0,
    doc_length: int = 20,
    keyword_rate: float = 0.3
) -> LabeledCorpus:
    """
    Build a corpus where every class owns a small keyword set.

    Each token is a class keyword with probability `keyword_rate` and a
    uniform background word otherwise. Keywords of one class are listed as
    synonyms of each other, so synonym replacement keeps the class signal.

    Args:
        num_classes: Number of classes
        docs_per_class: Documents generated per class
        vocab_size: Total vocabulary size (keywords are carved out of it)
        seed: Generator seed
        doc_length: Tokens per document
        keyword_rate: Probability a token is drawn from the class keywords

    Returns:
        LabeledCorpus in class-major order, with its synonym table
    """
    if min(num_classes, docs_per_class, vocab_size, doc_length) < 1:
        raise ValueError("num_classes, docs_per_class, vocab_size and doc_length must all be >= 1")
    if vocab_size < num_classes:
        raise ValueError(f"vocab_size ({vocab_size}) must be at least num_classes ({num_classes})")
    if not 0 < keyword_rate <= 1:
        raise ValueError(f"keyword_rate must lie in (0, 1], got {keyword_rate}")

    rng = np.random.default_rng(seed)
    width = len(str(vocab_size - 1))
    vocab = np.array([f"w{i:0{width}d}" for i in range(vocab_size)])
    order = rng.permutation(vocab_size)

    per_class = max(1, min(MAX_KEYWORDS_PER_CLASS, vocab_size // (2 * num_classes)))
    keywords = [vocab[order[c * per_class:(c + 1) * per_class]] for c in range(num_classes)]
    background = vocab[order[num_classes * per_class:]]
    if background.size == 0:
        background = vocab

    documents: List[LabeledDocument] = []
    for c in range(num_classes):
        label = f"class_{c:02d}"
        for _ in range(docs_per_class):
            is_keyword = rng.random(doc_length) < keyword_rate
            tokens = np.where(
                is_keyword,
                rng.choice(keywords[c], size=doc_length),
                rng.choice(background, size=doc_length)
            )
            documents.append(LabeledDocument(text=" ".join(tokens), label=label))

    synonyms: Dict[str, List[str]] = {}
    for words in keywords:
        for w in words:
            others = [str(o) for o in words if o != w]
            if others:
                synonyms[str(w)] = others

    logger.info(
        f"Generated synthetic corpus: {num_classes} classes x {docs_per_class} docs, "
        f"{per_class} keyword(s) per class"
    )
    return LabeledCorpus(documents=documents, synonyms=synonyms)


# =====================================================
# FILE FORMATS
# =====================================================

def load_synonyms(path: Union[str, Path]) -> Dict[str, List[str]]:
    """Read a synonym table: one `token<TAB>syn,syn,...` line per entry"""
    table: Dict[str, List[str]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise CorpusFormatError(f"{path}:{lineno}: expected 'token<TAB>synonyms'")
        synonyms = [s.strip() for s in parts[1].split(",") if s.strip()]
        if synonyms:
            table[parts[0].strip().lower()] = [s.lower() for s in synonyms]
    return table


def write_synonyms(table: Dict[str, List[str]], path: Union[str, Path]) -> Path:
    path = Path(path)
    lines = [f"{token}\t{','.join(syns)}" for token, syns in sorted(table.items())]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def load_jsonl_corpus(
    path: Union[str, Path],
    synonyms_path: Optional[Union[str, Path]] = None
) -> LabeledCorpus:
    """
    Load a labeled JSONL corpus.

    Args:
        path: JSONL file, one {"text", "label"} object per line
        synonyms_path: Optional synonym table; defaults to `<stem>.synonyms.tsv` if present

    Returns:
        LabeledCorpus; labels map to indices in first-seen order
    """
    path = Path(path)
    documents: List[LabeledDocument] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                documents.append(LabeledDocument.model_validate_json(line))
            except ValidationError as e:
                raise CorpusFormatError(f"{path}:{lineno}: {e.errors()[0]['msg']}") from e
    if not documents:
        raise EmptyInputError(f"Corpus {path} has no documents")

    if synonyms_path is None:
        default = synonyms_path_for(path)
        synonyms_path = default if default.is_file() else None
    synonyms = load_synonyms(synonyms_path) if synonyms_path else {}

    corpus = LabeledCorpus(documents=documents, synonyms=synonyms)
    logger.info(f"Loaded {len(documents)} documents, {len(corpus.label_names())} labels from {path}")
    return corpus


def synonyms_path_for(corpus_path: Union[str, Path]) -> Path:
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(f"{corpus_path.stem}.synonyms.tsv")


def write_corpus(corpus: LabeledCorpus, path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the corpus as JSONL plus its synonym table next to it"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(doc.model_dump_json() + "\n")
    synonyms = write_synonyms(corpus.synonyms, synonyms_path_for(path))
    return path, synonyms
