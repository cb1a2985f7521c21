"""CSV loading and the bundled fixtures.

Fixtures live in ``robustreg/data`` next to ``CHECKSUMS.txt`` (sha256 of
each file) and ``FIXTURES.txt`` (where the numbers come from). Nothing here
touches the network.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .estimation import CategoricalTerm, DataError, Dataset, DesignSpec, build_design


class SchemaError(DataError):
    """Header or column types do not match what was asked for."""


class FixtureChecksumError(DataError):
    """A bundled fixture no longer matches its recorded checksum."""


_PARSERS = {"float": float, "int": int, "str": str, float: float, int: int, str: str}


def load_csv(path: str | Path, schema: Mapping[str, object] | Sequence[str]) -> list[dict]:
    """Read a comma-separated UTF-8 file with a header row.

    Parameters
    ----------
    path : path-like
    schema : mapping or sequence
        Required columns, as ``{name: type}`` with type one of ``float``,
        ``int``, ``str`` (or their names), or a plain list of names read as
        floats. Extra columns are kept as strings.

    Returns
    -------
    list of dict
        One typed record per data row.

    Raises
    ------
    SchemaError
        Empty file or missing required column.
    DataError
        Missing value or unparsable number; the message carries the line.
    """
    if not isinstance(schema, Mapping):
        schema = {name: float for name in schema}
    parsers = {}
    for name, kind in schema.items():
        if kind not in _PARSERS:
            raise ValueError(f"unsupported column type {kind!r} for {name!r}")
        parsers[name] = _PARSERS[kind]

    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise SchemaError(f"{path}: empty file, expected header with {sorted(parsers)}")
        header = [h.strip() for h in header]
        missing = [name for name in parsers if name not in header]
        if missing:
            raise SchemaError(f"{path}:1: missing column(s) {missing}; header is {header}")
        records = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            rec = {}
            for name, raw in zip(header, row):
                raw = raw.strip()
                parse = parsers.get(name, str)
                if raw == "" or raw.upper() in ("NA", "NAN"):
                    if name in parsers:
                        raise DataError(f"{path}:{line}: missing value in column {name!r}")
                    rec[name] = raw
                    continue
                try:
                    rec[name] = parse(raw)
                except ValueError:
                    raise DataError(f"{path}:{line}: cannot parse {raw!r} in column "
                                    f"{name!r} as {parse.__name__}") from None
            records.append(rec)
    if not records:
        raise SchemaError(f"{path}: no data rows")
    return records


def schema_for(spec: DesignSpec) -> dict[str, object]:
    """Column types a design needs from its input file."""
    schema: dict[str, object] = {spec.response: float}
    for name in spec.numeric_columns:
        schema[name] = float
    for term in spec.categorical_columns:
        schema[term.field] = str
    if spec.row_id is not None:
        schema[spec.row_id] = str
    return schema


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _data_dir() -> Path:
    return Path(str(resources.files("robustreg") / "data"))


FIXTURES = ("taylor_triangle.csv", "shock.csv")


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; known: {FIXTURES}")
    return _data_dir() / name


def recorded_checksums() -> dict[str, str]:
    out = {}
    for line in (_data_dir() / "CHECKSUMS.txt").read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            digest, name = line.split()
            out[name] = digest
    return out


def verify_fixture(name: str, path: str | Path | None = None) -> str:
    """Return the sha256 of a fixture file, raising if it differs from the record."""
    path = fixture_path(name) if path is None else Path(path)
    digest = sha256_file(path)
    expected = recorded_checksums().get(name)
    if expected != digest:
        raise FixtureChecksumError(
            f"fixture {name} checksum {digest} does not match recorded {expected}")
    return digest


# designs of the two bundled studies

TRIANGLE_LEVELS = tuple(str(i) for i in range(10))

TAYLOR_DESIGN = DesignSpec(
    response="paid",
    intercept=True,
    categorical_columns=(CategoricalTerm("AY", TRIANGLE_LEVELS, "0"),
                         CategoricalTerm("DY", TRIANGLE_LEVELS, "0")),
    log_response=True,
)

SHOCK_DESIGN = DesignSpec(response="time", intercept=True, numeric_columns=("shocks",))


def load_taylor(path: str | Path | None = None) -> Dataset:
    """Incremental paid-loss triangle; log(paid) on accident- and development-year dummies."""
    path = fixture_path("taylor_triangle.csv") if path is None else path
    records = load_csv(path, {"AY": str, "DY": str, "paid": float})
    for r in records:
        r["row_id"] = f"AY{r['AY']}-DY{r['DY']}"
    return build_design(records, replace(TAYLOR_DESIGN, row_id="row_id"))


def load_shock(path: str | Path | None = None) -> Dataset:
    """Avoidance time against number of shocks, intercept plus slope."""
    path = fixture_path("shock.csv") if path is None else path
    records = load_csv(path, {"shocks": float, "time": float})
    return build_design(records, SHOCK_DESIGN)
