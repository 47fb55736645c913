"""Loading, representing, and splitting multi-label datasets.

A dataset pairs a feature table with a boolean label matrix. The canonical
on-disk form is a headered CSV whose label columns contain only ``0``/``1``;
an attribute-relation + label-XML loader is provided for compatibility with
the form in which the common multi-label benchmarks circulate.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataContractError

#: Missing-value marker for feature cells in all text formats.
MISSING = "?"


def _text_in(source):
    if hasattr(source, "read"):
        return nullcontext(source)
    return open(source, "r", encoding="utf-8", newline="")


def _text_out(dest):
    if hasattr(dest, "write"):
        return nullcontext(dest)
    return open(dest, "w", encoding="utf-8", newline="")


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Instance x label boolean matrix with ordered, unique label names."""

    label_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(self.label_names)
        if len(set(names)) != len(names):
            raise DataContractError("duplicate label names")
        if any(not isinstance(n, str) or not n for n in names):
            raise DataContractError("label names must be non-empty strings")
        values = np.array(self.values, dtype=bool, copy=True)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise DataContractError(
                f"label matrix shape {values.shape} does not match "
                f"{len(names)} label names"
            )
        values.setflags(write=False)
        object.__setattr__(self, "label_names", names)
        object.__setattr__(self, "values", values)

    @property
    def n_instances(self) -> int:
        return self.values.shape[0]

    @property
    def n_labels(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            raise DataContractError(f"unknown label {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def positive_counts(self) -> dict[str, int]:
        counts = self.values.sum(axis=0)
        return {name: int(c) for name, c in zip(self.label_names, counts)}

    def subset(self, rows: Sequence[int]) -> "LabelMatrix":
        return LabelMatrix(self.label_names, self.values[np.asarray(rows, dtype=int)])

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return self.label_names == other.label_names and np.array_equal(
            self.values, other.values
        )


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Feature table where each column is homogeneously numeric or nominal.

    Numeric columns are float64 with NaN marking missing cells; nominal
    columns are object arrays of tokens with None marking missing cells.
    """

    n_instances: int
    feature_names: tuple[str, ...]
    columns: tuple[np.ndarray, ...]

    def __post_init__(self):
        names = tuple(self.feature_names)
        if len(set(names)) != len(names):
            raise DataContractError("duplicate feature names")
        if len(names) != len(self.columns):
            raise DataContractError("feature names and columns disagree")
        cols = []
        for name, col in zip(names, self.columns):
            col = np.asarray(col)
            if col.dtype.kind == "f":
                col = np.array(col, dtype=np.float64, copy=True)
            elif col.dtype.kind == "O":
                col = np.array(col, dtype=object, copy=True)
            else:
                raise DataContractError(
                    f"feature column {name!r} must be float or object typed"
                )
            if col.shape != (self.n_instances,):
                raise DataContractError(
                    f"feature column {name!r} has {col.shape[0]} rows, "
                    f"expected {self.n_instances}"
                )
            col.setflags(write=False)
            cols.append(col)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "columns", tuple(cols))

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def is_numeric(self, i: int) -> bool:
        return self.columns[i].dtype.kind == "f"

    def subset(self, rows: Sequence[int]) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=int)
        return FeatureMatrix(
            len(rows), self.feature_names, tuple(c[rows] for c in self.columns)
        )

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        if (
            self.feature_names != other.feature_names
            or self.n_instances != other.n_instances
        ):
            return False
        for a, b in zip(self.columns, other.columns):
            if a.dtype.kind != b.dtype.kind:
                return False
            if a.dtype.kind == "f":
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif not all(x == y for x, y in zip(a, b)):
                return False
        return True


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    features: FeatureMatrix
    labels: LabelMatrix
    name: str = ""

    def __post_init__(self):
        if self.features.n_instances != self.labels.n_instances:
            raise DataContractError(
                f"feature rows ({self.features.n_instances}) and label rows "
                f"({self.labels.n_instances}) disagree"
            )

    @property
    def n_instances(self) -> int:
        return self.labels.n_instances

    def subset(self, rows: Sequence[int]) -> "MultiLabelDataset":
        return MultiLabelDataset(
            self.features.subset(rows), self.labels.subset(rows), self.name
        )

    def __eq__(self, other):
        if not isinstance(other, MultiLabelDataset):
            return NotImplemented
        return self.features == other.features and self.labels == other.labels


@dataclass(frozen=True, eq=False)
class FoldSplit:
    """Per-instance fold assignment for cross-validation."""

    fold_count: int
    assignment: np.ndarray

    def __post_init__(self):
        assignment = np.array(self.assignment, dtype=int, copy=True)
        if assignment.ndim != 1:
            raise DataContractError("fold assignment must be one-dimensional")
        if len(assignment) and (
            assignment.min() < 0 or assignment.max() >= self.fold_count
        ):
            raise DataContractError("fold index out of range in assignment")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @property
    def n_instances(self) -> int:
        return len(self.assignment)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def __eq__(self, other):
        if not isinstance(other, FoldSplit):
            return NotImplemented
        return self.fold_count == other.fold_count and np.array_equal(
            self.assignment, other.assignment
        )


def _classify_feature(tokens: list[str]) -> np.ndarray:
    """Return a float column if every present token parses, else a token column."""
    present = [t for t in tokens if t.strip() != MISSING]
    numeric = True
    for t in present:
        try:
            float(t)
        except ValueError:
            numeric = False
            break
    if numeric:
        return np.array(
            [np.nan if t.strip() == MISSING else float(t) for t in tokens],
            dtype=np.float64,
        )
    return np.array(
        [None if t.strip() == MISSING else t for t in tokens], dtype=object
    )


def load_csv(source, label_names: Iterable[str]) -> MultiLabelDataset:
    """Load a headered CSV, taking the named columns as labels.

    Label cells must be exactly ``0`` or ``1``. All remaining columns become
    features; a cell of ``?`` marks a missing feature value. Columns whose
    present cells all parse as numbers are numeric, the rest nominal.
    """
    wanted = set(label_names)
    if not wanted:
        raise DataContractError("no labels declared")
    name = Path(source).stem if not hasattr(source, "read") else ""
    with _text_in(source) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataContractError("empty file: missing header row")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DataContractError("duplicate column names in header")
    missing = sorted(wanted - set(header))
    if missing:
        raise DataContractError(f"label column(s) not found: {', '.join(missing)}")
    width = len(header)
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != width:
            raise DataContractError(
                f"row {i}: expected {width} fields, got {len(row)}"
            )
    label_idx = [j for j, h in enumerate(header) if h in wanted]
    feature_idx = [j for j, h in enumerate(header) if h not in wanted]

    data = rows[1:]
    n = len(data)
    label_cols = np.zeros((n, len(label_idx)), dtype=bool)
    for k, j in enumerate(label_idx):
        for i, row in enumerate(data):
            cell = row[j].strip()
            if cell == "1":
                label_cols[i, k] = True
            elif cell != "0":
                raise DataContractError(
                    f"label column {header[j]!r}, row {i + 1}: "
                    f"value {row[j]!r} is not 0/1"
                )
    labels = LabelMatrix(tuple(header[j] for j in label_idx), label_cols)
    columns = tuple(
        _classify_feature([row[j] for row in data]) for j in feature_idx
    )
    features = FeatureMatrix(n, tuple(header[j] for j in feature_idx), columns)
    return MultiLabelDataset(features, labels, name)


def _format_float(v: float) -> str:
    return MISSING if np.isnan(v) else repr(float(v))


def save_csv(dataset: MultiLabelDataset, dest) -> None:
    """Write a dataset in the canonical CSV form (features first, then labels)."""
    feats, labels = dataset.features, dataset.labels
    with _text_out(dest) as fh:
        writer = csv.writer(fh)
        writer.writerow(list(feats.feature_names) + list(labels.label_names))
        for i in range(dataset.n_instances):
            row = []
            for col in feats.columns:
                if col.dtype.kind == "f":
                    row.append(_format_float(col[i]))
                else:
                    row.append(MISSING if col[i] is None else col[i])
            row.extend("1" if v else "0" for v in labels.values[i])
            writer.writerow(row)


# --- attribute-relation (.arff-style) + label-XML loading ---------------------

_NUMERIC_TYPES = {"numeric", "real", "integer"}
_UNSUPPORTED_TYPES = {"string", "date", "relational"}


def _unquote(token: str) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


def _split_quoted(text: str) -> list[str]:
    """Split on commas outside single/double quotes."""
    parts, buf, quote = [], [], None
    for ch in text:
        if quote:
            buf.append(ch)
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf))
    return parts


def _parse_attribute(line: str, lineno: int):
    body = line[len("@attribute") :].strip()
    if not body:
        raise DataContractError(f"line {lineno}: malformed @attribute")
    if body[0] in "'\"":
        end = body.find(body[0], 1)
        if end < 0:
            raise DataContractError(f"line {lineno}: unterminated attribute name")
        name, type_text = body[1:end], body[end + 1 :].strip()
    else:
        split = body.split(None, 1)
        if len(split) != 2:
            raise DataContractError(f"line {lineno}: @attribute needs a type")
        name, type_text = split
    if type_text.startswith("{"):
        if not type_text.endswith("}"):
            raise DataContractError(f"line {lineno}: unterminated nominal domain")
        values = tuple(
            _unquote(v) for v in _split_quoted(type_text[1:-1]) if v.strip() != ""
        )
        if not values:
            raise DataContractError(
                f"line {lineno}: nominal attribute {name!r} has no values"
            )
        return name, values
    kind = type_text.split()[0].lower()
    if kind in _NUMERIC_TYPES:
        return name, None
    raise DataContractError(
        f"unsupported attribute type {kind!r} for attribute {name!r}"
    )


def _parse_arff(source):
    relation = ""
    attributes: list[tuple[str, tuple[str, ...] | None]] = []
    rows: list[list[str]] = []
    in_data = False
    with _text_in(source) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                lowered = line.lower()
                if lowered.startswith("@relation"):
                    relation = _unquote(line[len("@relation") :])
                elif lowered.startswith("@attribute"):
                    attributes.append(_parse_attribute(line, lineno))
                elif lowered.startswith("@data"):
                    if not attributes:
                        raise DataContractError("@data before any @attribute")
                    in_data = True
                else:
                    raise DataContractError(
                        f"line {lineno}: unrecognized header line {line!r}"
                    )
                continue
            if line.startswith("{"):
                # Sparse row: unspecified entries default to 0 / first value.
                end = line.rfind("}")
                if end < 0:
                    raise DataContractError(f"line {lineno}: unterminated sparse row")
                row = [
                    "0" if values is None else values[0]
                    for _, values in attributes
                ]
                inner = line[1:end].strip()
                if inner:
                    for entry in _split_quoted(inner):
                        entry = entry.strip()
                        if not entry:
                            continue
                        split = entry.split(None, 1)
                        if len(split) != 2:
                            raise DataContractError(
                                f"line {lineno}: malformed sparse entry {entry!r}"
                            )
                        idx_text, value = split
                        try:
                            idx = int(idx_text)
                        except ValueError:
                            raise DataContractError(
                                f"line {lineno}: bad sparse index {idx_text!r}"
                            ) from None
                        if not 0 <= idx < len(attributes):
                            raise DataContractError(
                                f"line {lineno}: sparse index {idx} out of range"
                            )
                        row[idx] = _unquote(value)
                rows.append(row)
            else:
                row = [_unquote(t) for t in _split_quoted(line)]
                if len(row) != len(attributes):
                    raise DataContractError(
                        f"line {lineno}: expected {len(attributes)} values, "
                        f"got {len(row)}"
                    )
                rows.append(row)
    if not in_data:
        raise DataContractError("missing @data section")
    names = [n for n, _ in attributes]
    if len(set(names)) != len(names):
        raise DataContractError("duplicate attribute names")
    return relation, attributes, rows


def _read_label_list(xml_source) -> tuple[str, ...]:
    with _text_in(xml_source) as fh:
        text = fh.read()
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise DataContractError(f"malformed label XML: {exc}") from None
    names = []
    for el in root.iter():
        if el.tag.rsplit("}", 1)[-1] == "label":
            name = el.get("name")
            if name is None:
                raise DataContractError("label element without a name attribute")
            names.append(name)
    if not names:
        raise DataContractError("no labels declared in XML")
    if len(set(names)) != len(names):
        raise DataContractError("duplicate labels in XML")
    return tuple(names)


def load_mulan(arff_source, xml_source) -> MultiLabelDataset:
    """Load an attribute-relation file plus the XML that names its label attributes.

    Accepts numeric and nominal attributes and both dense and ``{index value}``
    sparse data rows. Label attributes must be nominal over {0, 1}.
    """
    label_names = _read_label_list(xml_source)
    relation, attributes, rows = _parse_arff(arff_source)
    by_name = {name: (i, values) for i, (name, values) in enumerate(attributes)}
    for label in label_names:
        if label not in by_name:
            raise DataContractError(
                f"label {label!r} listed in the label XML is not an attribute"
            )
        values = by_name[label][1]
        if values is None or not set(values) <= {"0", "1"}:
            raise DataContractError(
                f"label attribute {label!r} must be nominal over {{0,1}}"
            )

    n = len(rows)
    label_array = np.zeros((n, len(label_names)), dtype=bool)
    for k, label in enumerate(label_names):
        j = by_name[label][0]
        for i, row in enumerate(rows):
            cell = row[j].strip()
            if cell == "1":
                label_array[i, k] = True
            elif cell == "0":
                continue
            else:
                raise DataContractError(
                    f"label {label!r}, row {i + 1}: value {row[j]!r} is not 0/1"
                )
    labels = LabelMatrix(label_names, label_array)

    label_set = set(label_names)
    feature_names = []
    columns = []
    for j, (name, values) in enumerate(attributes):
        if name in label_set:
            continue
        feature_names.append(name)
        tokens = [row[j] for row in rows]
        if values is None:
            col = np.empty(n, dtype=np.float64)
            for i, t in enumerate(tokens):
                t = t.strip()
                if t == MISSING:
                    col[i] = np.nan
                else:
                    try:
                        col[i] = float(t)
                    except ValueError:
                        raise DataContractError(
                            f"attribute {name!r}, row {i + 1}: "
                            f"{t!r} is not numeric"
                        ) from None
        else:
            domain = set(values)
            col = np.empty(n, dtype=object)
            for i, t in enumerate(tokens):
                stripped = t.strip()
                if stripped == MISSING:
                    col[i] = None
                elif stripped in domain:
                    col[i] = stripped
                else:
                    raise DataContractError(
                        f"attribute {name!r}, row {i + 1}: value {t!r} "
                        f"outside declared domain"
                    )
        columns.append(col)
    features = FeatureMatrix(n, tuple(feature_names), tuple(columns))
    return MultiLabelDataset(features, labels, relation)


def split_folds(dataset: MultiLabelDataset, fold_count: int, seed: int) -> FoldSplit:
    """Assign instances to folds uniformly at random; sizes differ by at most 1."""
    n = dataset.n_instances
    if fold_count < 2 or fold_count > n:
        raise DataContractError(
            f"fold_count must be in [2, {n}], got {fold_count}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[perm] = np.arange(n) % fold_count
    return FoldSplit(fold_count, assignment)
