"""
Feature builder

Turns FeatureRows into the two model inputs:

- a dense tabular matrix for the tree model, where NaN marks a missing cell
- a hashed word n-gram tf-idf matrix over the free-text fields for the text model

Both are written to disk as a JSON header line followed by (row, column, value)
triplets.
"""
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import HashingVectorizer
from sklearn.preprocessing import normalize

from models.encodings import MULTI_LABEL_FEATURES, SINGLE_LABEL_FEATURES, category_values, encode_categorical
from models.errors import DatasetIOError, DimensionMismatch, EmptyDataset, MissingIdfStats, SchemaVersionMismatch
from models.records import BINARY_FIELDS, NUMERIC_FIELDS, TEXT_FIELDS, FeatureRow

logger = logging.getLogger(__name__)

UNKNOWN_TOKEN = 'UNKNOWN'
# letters and digits of any script; punctuation and underscores separate tokens
_TOKEN = re.compile(r'[^\W_]+')
_ALIASES = {name: info.alias for name, info in FeatureRow.model_fields.items()}
_FIELDS = {alias: name for name, alias in _ALIASES.items()}


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # numeric, onehot, multihot or binary


def tabular_columns() -> Tuple[Column, ...]:
    """Column layout of the tabular matrix; depends only on the encoding tables."""
    columns = []
    for feature in SINGLE_LABEL_FEATURES:
        columns.extend(Column(f'{feature}_{idx}', 'onehot') for idx in range(len(category_values(feature))))
        columns.append(Column(f'{feature}_missing', 'onehot'))
    for feature in MULTI_LABEL_FEATURES:
        columns.extend(Column(f'{feature}_{idx}', 'multihot') for idx in range(len(category_values(feature))))
    columns.extend(Column(_ALIASES[name], 'binary') for name in BINARY_FIELDS)
    columns.extend(Column(_ALIASES[name], 'numeric') for name in NUMERIC_FIELDS)
    return tuple(columns)


@dataclass(frozen=True)
class TabularMatrix:
    row_ids: Tuple[str, ...]
    columns: Tuple[Column, ...]
    values: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def column_names(self) -> List[str]:
        return [column.name for column in self.columns]

    def select(self, row_ids: Sequence[str]) -> 'TabularMatrix':
        position = {nct_id: i for i, nct_id in enumerate(self.row_ids)}
        index = [position[nct_id] for nct_id in row_ids]
        return TabularMatrix(tuple(row_ids), self.columns, self.values[index])


def _encode_row(row: FeatureRow, offsets: Dict[str, int], width: int) -> np.ndarray:
    cells = np.zeros(width)
    for feature in SINGLE_LABEL_FEATURES:
        raw = getattr(row, _FIELDS[feature])
        if raw is None:
            cells[offsets[f'{feature}_missing']] = 1.0
        else:
            cells[offsets[f'{feature}_{encode_categorical(feature, raw)}']] = 1.0
    for feature in MULTI_LABEL_FEATURES:
        raw = getattr(row, _FIELDS[feature])
        size = len(category_values(feature))
        start = offsets[f'{feature}_0']
        if raw is None:
            cells[start:start + size] = np.nan
        else:
            for idx in encode_categorical(feature, tuple(raw)):
                cells[start + idx] = 1.0
    for name in BINARY_FIELDS + NUMERIC_FIELDS:
        value = getattr(row, name)
        cells[offsets[_ALIASES[name]]] = np.nan if value is None else float(value)
    return cells


def build_tabular_matrix(rows: Sequence[FeatureRow]) -> TabularMatrix:
    """Encode feature rows as one-hot, multi-hot, binary and numeric columns.

    Single-label categoricals get an explicit ``_missing`` column; a missing
    multi-label, binary or numeric value leaves NaN in its cells.
    """
    if not rows:
        raise EmptyDataset('no feature rows to encode')
    columns = tabular_columns()
    offsets = {column.name: i for i, column in enumerate(columns)}
    values = np.vstack([_encode_row(row, offsets, len(columns)) for row in rows])
    return TabularMatrix(tuple(row.nct_id for row in rows), columns, values)


def _field_texts(row: FeatureRow) -> Tuple[Tuple[str, Optional[str]], ...]:
    return tuple((_ALIASES[name], getattr(row, name)) for name in TEXT_FIELDS)


def make_analyzer(ngram_max: int):
    """Field-prefixed word n-grams; a missing field yields its UNKNOWN token."""
    def analyze(document) -> List[str]:
        grams = []
        for field, text in document:
            tokens = _TOKEN.findall(text.lower()) if text else []
            if not tokens:
                grams.append(f'{field}:{UNKNOWN_TOKEN}')
                continue
            for n in range(1, ngram_max + 1):
                grams.extend(f'{field}:' + ' '.join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
        return grams
    return analyze


@dataclass(frozen=True)
class IdfStats:
    """Document frequencies fitted on the training rows."""
    n_documents: int
    d: int
    ngram_max: int
    document_frequency: Dict[int, int]
    fitted_on: str = ''

    def idf(self) -> np.ndarray:
        df = np.zeros(self.d)
        if self.document_frequency:
            index = np.fromiter(self.document_frequency.keys(), dtype=np.int64)
            df[index] = np.fromiter(self.document_frequency.values(), dtype=np.float64)
        return np.log((1.0 + self.n_documents) / (1.0 + df)) + 1.0

    def save(self, path: Union[str, Path]) -> None:
        payload = {
            'n_documents': self.n_documents, 'd': self.d, 'ngram_max': self.ngram_max,
            'document_frequency': sorted([idx, count] for idx, count in self.document_frequency.items()),
            'fitted_on': self.fitted_on,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True) + '\n', encoding='utf-8')

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'IdfStats':
        try:
            payload = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, ValueError) as exc:
            raise DatasetIOError(f'cannot read idf statistics {path}: {exc}') from None
        return cls(
            n_documents=payload['n_documents'], d=payload['d'], ngram_max=payload['ngram_max'],
            document_frequency={int(idx): int(count) for idx, count in payload['document_frequency']},
            fitted_on=payload.get('fitted_on', ''),
        )


@dataclass(frozen=True)
class TextMatrix:
    row_ids: Tuple[str, ...]
    d: int
    matrix: sparse.csr_matrix

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def select(self, row_ids: Sequence[str]) -> 'TextMatrix':
        position = {nct_id: i for i, nct_id in enumerate(self.row_ids)}
        index = [position[nct_id] for nct_id in row_ids]
        return TextMatrix(tuple(row_ids), self.d, self.matrix[index])


def _term_counts(rows: Sequence[FeatureRow], d: int, ngram_max: int) -> sparse.csr_matrix:
    vectorizer = HashingVectorizer(n_features=d, analyzer=make_analyzer(ngram_max),
                                   alternate_sign=False, norm=None, dtype=np.float64)
    return vectorizer.transform([_field_texts(row) for row in rows]).tocsr()


def fit_idf(rows: Sequence[FeatureRow], d: int = 2 ** 18, ngram_max: int = 2, fitted_on: str = '') -> IdfStats:
    """Document frequencies of the hashed n-grams over the given (training) rows."""
    if not rows:
        raise EmptyDataset('cannot fit idf statistics on zero documents')
    counts = _term_counts(rows, d, ngram_max)
    df = np.asarray((counts > 0).sum(axis=0)).ravel()
    nonzero = np.flatnonzero(df)
    return IdfStats(n_documents=len(rows), d=d, ngram_max=ngram_max,
                    document_frequency={int(i): int(df[i]) for i in nonzero}, fitted_on=fitted_on)


def vectorize_text(rows: Sequence[FeatureRow], d: int = 2 ** 18, ngram_max: int = 2,
                   idf_stats: Optional[IdfStats] = None, fit: bool = False) -> Tuple[TextMatrix, IdfStats]:
    """Hashed tf-idf rows, L2-normalized.

    Args:
        rows: Feature rows to vectorize
        d: Number of hash buckets (power of two)
        ngram_max: Longest word n-gram
        idf_stats: Training statistics; required unless fit is set
        fit: Fit idf statistics on these rows first

    Returns:
        (TextMatrix, IdfStats)

    Raises:
        MissingIdfStats: transforming without fitted statistics
        DimensionMismatch: statistics fitted with another d or ngram_max
    """
    if fit:
        idf_stats = fit_idf(rows, d, ngram_max)
    if idf_stats is None:
        raise MissingIdfStats('text transform needs idf statistics fitted on the training split')
    if (idf_stats.d, idf_stats.ngram_max) != (d, ngram_max):
        raise DimensionMismatch(
            f'idf statistics fitted with d={idf_stats.d}, ngram_max={idf_stats.ngram_max}; '
            f'requested d={d}, ngram_max={ngram_max}')

    counts = _term_counts(rows, d, ngram_max)
    weighted = normalize(counts @ sparse.diags(idf_stats.idf()), norm='l2', axis=1)
    return TextMatrix(tuple(row.nct_id for row in rows), d, sparse.csr_matrix(weighted)), idf_stats


def _write_triplets(path, header: dict, matrix: sparse.coo_matrix) -> None:
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(f'{i}\t{j}\t{value!r}' for i, j, value in zip(matrix.row, matrix.col, matrix.data.tolist()))
    try:
        Path(path).write_text('\n'.join(lines) + '\n', encoding='utf-8')
    except OSError as exc:
        raise DatasetIOError(f'cannot write {path}: {exc}') from None


def _read_triplets(path, kind: str) -> Tuple[dict, sparse.coo_matrix]:
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as exc:
        raise DatasetIOError(f'cannot read {path}: {exc}') from None
    header = json.loads(lines[0]) if lines else {}
    if header.get('kind') != kind:
        raise SchemaVersionMismatch(f'{path}: expected a {kind} matrix file')
    rows, cols, data = [], [], []
    for line in lines[1:]:
        if line:
            i, j, value = line.split('\t')
            rows.append(int(i))
            cols.append(int(j))
            data.append(float(value))
    shape = (header['rows'], header['cols'])
    return header, sparse.coo_matrix((data, (rows, cols)), shape=shape)


def save_tabular_matrix(matrix: TabularMatrix, path) -> None:
    header = {'kind': 'tabular', 'rows': matrix.shape[0], 'cols': matrix.shape[1],
              'columns': [[column.name, column.kind] for column in matrix.columns],
              'row_ids': list(matrix.row_ids)}
    # zeros are implicit, NaN cells are stored
    _write_triplets(path, header, sparse.coo_matrix(matrix.values))


def load_tabular_matrix(path) -> TabularMatrix:
    header, coo = _read_triplets(path, 'tabular')
    values = np.zeros(coo.shape)
    values[coo.row, coo.col] = coo.data
    columns = tuple(Column(name, kind) for name, kind in header['columns'])
    return TabularMatrix(tuple(header['row_ids']), columns, values)


def save_text_matrix(matrix: TextMatrix, path) -> None:
    header = {'kind': 'text', 'rows': matrix.shape[0], 'cols': matrix.d, 'row_ids': list(matrix.row_ids)}
    _write_triplets(path, header, matrix.matrix.tocoo())


def load_text_matrix(path) -> TextMatrix:
    header, coo = _read_triplets(path, 'text')
    return TextMatrix(tuple(header['row_ids']), header['cols'], coo.tocsr())
