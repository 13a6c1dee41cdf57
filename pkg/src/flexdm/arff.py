"""ARFF dataset ingestion (numeric and nominal attributes only).

Attribute typing, nominal domains and the data rows come from
`scipy.io.arff`. This module keeps what the runner needs on top of it:
source line numbers in errors, `%` comments anywhere outside quotes,
quoted relation and attribute names, `?` read as a missing value, and
rejection of string, date and relational attributes and sparse rows.
The last attribute is the class attribute.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from scipy.io import arff as scipy_arff

from .models import Attribute, Dataset, Value

LOGGER = logging.getLogger(__name__)

MISSING = "?"
SUPPORTED_TYPES = ("numeric", "nominal")
# Same delimiters and sniffing scipy applies to every data row.
ROW_DELIMITERS = ",\t"
_QUOTES = {"'", '"'}
_SPECIAL_CHARS = set(" \t,'\"%{}\\")
_UNSUPPORTED_TYPE = re.compile(r"^(string|date|relational)\b", re.IGNORECASE)


class ArffError(ValueError):
    """Raised when ARFF text cannot be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.message = message
        self.line = line
        super().__init__(message if line is None else f"{message} (line {line})")


class UnsupportedArffFeature(ArffError):
    """Raised for valid ARFF constructs outside the supported subset."""

    def __init__(self, feature: str, line: int | None = None) -> None:
        super().__init__(f"unsupported ARFF feature: {feature}", line)


@dataclass(frozen=True)
class _SourceLine:
    number: int
    text: str


@dataclass(frozen=True)
class _Declaration:
    attribute: Attribute
    declared_type: str


def _strip_comment(text: str) -> str:
    quote: str | None = None
    escaped = False
    for index, char in enumerate(text):
        if escaped:
            escaped = False
            continue
        if quote is not None:
            if char == "\\":
                escaped = True
            elif char == quote:
                quote = None
            continue
        if char in _QUOTES:
            quote = char
        elif char == "%":
            return text[:index]
    return text


def _source_lines(text: str) -> Iterator[_SourceLine]:
    """Non-blank lines with comments removed, numbered as in the source."""
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw_line).strip()
        if line:
            yield _SourceLine(number, line)


def _read_token(text: str, pos: int, line: int) -> tuple[str, int]:
    """Read one bare or quoted token starting at `pos`."""
    length = len(text)
    while pos < length and text[pos].isspace():
        pos += 1
    if pos >= length:
        raise ArffError("expected a name", line)

    if text[pos] in _QUOTES:
        quote = text[pos]
        pos += 1
        chars: list[str] = []
        while pos < length:
            char = text[pos]
            if char == "\\" and pos + 1 < length:
                chars.append(text[pos + 1])
                pos += 2
                continue
            if char == quote:
                return "".join(chars), pos + 1
            chars.append(char)
            pos += 1
        raise ArffError("unterminated quoted name", line)

    start = pos
    while pos < length and not text[pos].isspace() and text[pos] != "{":
        pos += 1
    return text[start:pos], pos


def _scipy_type(name: str, declared_type: str, line: int) -> tuple[str, tuple[str, ...] | None]:
    """Type name and nominal domain of one declaration, as scipy reads them."""
    header = f"@relation declaration\n@attribute a {declared_type}\n@data\n"
    try:
        _, meta = scipy_arff.loadarff(io.StringIO(header))
    except NotImplementedError as exc:
        raise UnsupportedArffFeature(f"string attribute '{name}'", line) from exc
    except (scipy_arff.ArffError, ValueError, csv.Error) as exc:
        unsupported = _UNSUPPORTED_TYPE.match(declared_type)
        if unsupported:
            raise UnsupportedArffFeature(
                f"{unsupported.group(1).lower()} attribute '{name}'", line
            ) from exc
        raise ArffError(f"unknown type '{declared_type}' for attribute '{name}'", line) from exc

    type_name, domain = meta["a"]
    if type_name not in SUPPORTED_TYPES:
        raise UnsupportedArffFeature(f"{type_name} attribute '{name}'", line)
    return type_name, None if domain is None else tuple(domain)


def _parse_declaration(text: str, line: int) -> _Declaration:
    name, pos = _read_token(text, 0, line)
    if not name:
        raise ArffError("attribute name must be non-empty", line)
    declared_type = text[pos:].strip()
    if not declared_type:
        raise ArffError(f"attribute '{name}' has no type", line)

    type_name, labels = _scipy_type(name, declared_type, line)
    if type_name == "numeric":
        return _Declaration(Attribute(name=name), declared_type)

    if not labels or any(not label for label in labels):
        raise ArffError(f"nominal labels of attribute '{name}' must be non-empty", line)
    if len(set(labels)) != len(labels):
        raise ArffError(f"nominal labels of attribute '{name}' must be unique", line)
    if MISSING in labels:
        raise ArffError(f"'{MISSING}' cannot be a nominal label of attribute '{name}'", line)
    if not all(label.isascii() for label in labels):
        raise UnsupportedArffFeature(f"non-ASCII nominal labels of attribute '{name}'", line)
    return _Declaration(Attribute(name=name, labels=labels), declared_type)


def _row_dialect(first_row: _SourceLine) -> type[csv.Dialect]:
    sample = first_row.text
    if not any(delimiter in sample for delimiter in ROW_DELIMITERS):
        sample += ","
    try:
        return csv.Sniffer().sniff(sample, delimiters=ROW_DELIMITERS)
    except csv.Error as exc:
        raise ArffError(f"cannot split data row: {exc}", first_row.number) from exc


def _check_row(
    row: _SourceLine, dialect: type[csv.Dialect], attributes: list[Attribute]
) -> None:
    fields = next(csv.reader([row.text], dialect))
    if len(fields) != len(attributes):
        raise ArffError(
            f"row has {len(fields)} values, expected {len(attributes)}", row.number
        )

    for field, attribute in zip(fields, attributes):
        if attribute.labels is not None:
            if field != MISSING and field not in attribute.labels:
                raise ArffError(f"undeclared nominal label '{field}'", row.number)
            continue
        if field.strip() == MISSING:
            continue
        try:
            number = float(field)
        except ValueError:
            number = math.nan
        if not math.isfinite(number):
            raise ArffError(
                f"invalid numeric value '{field}' for attribute '{attribute.name}'", row.number
            )


def _read_rows(
    declarations: list[_Declaration], data: list[_SourceLine]
) -> tuple[tuple[Value, ...], ...]:
    attributes = [declaration.attribute for declaration in declarations]
    for row in data:
        if row.text.startswith("{"):
            raise UnsupportedArffFeature("sparse instances", row.number)
    dialect = _row_dialect(data[0])
    for row in data:
        _check_row(row, dialect, attributes)

    lines = ["@relation data"]
    lines.extend(
        f"@attribute a{index} {declaration.declared_type}"
        for index, declaration in enumerate(declarations)
    )
    lines.append("@data")
    lines.extend(row.text for row in data)
    try:
        records, _ = scipy_arff.loadarff(io.StringIO("\n".join(lines) + "\n"))
    except (scipy_arff.ArffError, ValueError, IndexError, csv.Error) as exc:
        raise ArffError(f"cannot read data rows: {exc}") from exc

    label_indices = [
        None
        if attribute.labels is None
        else {label: index for index, label in enumerate(attribute.labels)}
        for attribute in attributes
    ]
    rows: list[tuple[Value, ...]] = []
    for record in records:
        values: list[Value] = []
        for column, labels in enumerate(label_indices):
            cell = record[column]
            if labels is None:
                number = float(cell)
                values.append(None if math.isnan(number) else number)
                continue
            # scipy stores nominal cells as ASCII bytes.
            label = cell.decode("ascii")
            values.append(None if label == MISSING else labels[label])
        rows.append(tuple(values))
    return tuple(rows)


def parse_arff(text: str) -> Dataset:
    relation = ""
    declarations: list[_Declaration] = []
    data: list[_SourceLine] | None = None

    for line in _source_lines(text):
        if data is not None:
            if line.text.startswith("@"):
                raise ArffError(f"header keyword after @data: {line.text.split()[0]}", line.number)
            data.append(line)
            continue

        if not line.text.startswith("@"):
            raise ArffError(f"unexpected text before @data: {line.text!r}", line.number)

        keyword = line.text.split(None, 1)[0].lower()
        if keyword == "@relation":
            relation, _ = _read_token(line.text[len("@relation"):], 0, line.number)
        elif keyword == "@attribute":
            declaration = _parse_declaration(line.text[len("@attribute"):], line.number)
            name = declaration.attribute.name
            if any(existing.attribute.name == name for existing in declarations):
                raise ArffError(f"duplicate attribute '{name}'", line.number)
            declarations.append(declaration)
        elif keyword == "@data":
            if not declarations:
                raise ArffError("@data before any @attribute", line.number)
            data = []
        else:
            raise ArffError(f"unknown header keyword {keyword}", line.number)

    if not declarations:
        raise ArffError("no @attribute declarations")

    rows = _read_rows(declarations, data) if data else ()
    attributes = tuple(declaration.attribute for declaration in declarations)
    LOGGER.debug(
        "Parsed ARFF relation %r: %s attributes, %s instances",
        relation,
        len(attributes),
        len(rows),
    )
    return Dataset(
        relation=relation,
        attributes=attributes,
        rows=rows,
        class_index=len(attributes) - 1,
    )


def load_arff(path: Path) -> Dataset:
    return parse_arff(Path(path).read_text(encoding="utf-8"))


def class_counts(ds: Dataset, rows: Iterable[int]) -> list[int]:
    """Histogram of known class labels over `rows`, aligned with `ds.class_labels`."""
    counts = [0] * len(ds.class_labels)
    for row in rows:
        label = ds.class_of(row)
        if label is not None:
            counts[label] += 1
    return counts


def _quote_name(token: str) -> str:
    if token and not any(char in _SPECIAL_CHARS for char in token):
        return token
    escaped = token.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def _quote_label(label: str) -> str:
    # Labels go through csv, which has no escape character here.
    if not any(char in _SPECIAL_CHARS for char in label):
        return label
    if '"' in label:
        raise ArffError(f"cannot write nominal label containing a double quote: {label!r}")
    return f'"{label}"'


def dump_arff(ds: Dataset) -> str:
    lines = [f"@relation {_quote_name(ds.relation)}", ""]
    for attribute in ds.attributes:
        if attribute.labels is None:
            lines.append(f"@attribute {_quote_name(attribute.name)} numeric")
        else:
            labels = ",".join(_quote_label(label) for label in attribute.labels)
            lines.append(f"@attribute {_quote_name(attribute.name)} {{{labels}}}")
    lines.extend(["", "@data"])
    for row in ds.rows:
        cells: list[str] = []
        for value, attribute in zip(row, ds.attributes):
            if value is None:
                cells.append(MISSING)
            elif attribute.labels is None:
                cells.append(repr(float(value)))
            else:
                cells.append(_quote_label(attribute.labels[int(value)]))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
