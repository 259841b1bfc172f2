"""
File formats: panel CSV ingestion, flat config files, the draw store and
tidy result tables.

Panel files
-----------
Long format has columns ``date,country,variable,value``::

    date,country,variable,value
    1997Q2,DE,rgdp_level,512.3
    1997Q2,DE,pi,1.4

Wide format has a ``date`` column followed by ``<country>:<variable>``
columns::

    date,DE:rgdp_level,DE:pi,FR:y,FR:pi
    1997Q2,512.3,1.4,2210.1,1.1

Variables are ``y`` (output already on the 400 log scale), ``rgdp_level``
(real GDP level, transformed to ``400 log`` on ingest) and ``pi``
(year-on-year inflation, passed through).

Config files
------------
One ``key = value`` pair per line, keys are :class:`ModelConfig` field
names, ``#`` starts a comment, ``none`` is the null value.

Draw store
----------
A CSV whose first line is ``# tcdfm-draws v1 <json>``; the JSON records
column shapes, constant fields and the run manifest. Each later row is one
retained draw, starting with its log-likelihood. Floats are written with
``repr`` so files round-trip byte for byte.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import tempfile
import typing
from typing import Optional

import numpy as np

from .model import ConfigError, DataPanel, ModelConfig, ParameterDraw, parse_quarter, validate_config
from .sampler import ChainOutput

__all__ = [
    "IngestError",
    "ingest_csv",
    "write_panel",
    "read_config",
    "write_config",
    "format_config",
    "parse_config_text",
    "config_from_values",
    "write_draws",
    "read_draws",
    "write_manifest",
    "file_digest",
    "atomic_write",
    "decomposition_csv",
    "irf_csv",
    "gap_csv",
    "gapfilter_csv",
]

DRAWS_MAGIC = "# tcdfm-draws v1 "
VARIABLES = ("y", "rgdp_level", "pi")


class IngestError(ValueError):
    """Malformed panel file; the message names the offending row."""


def _num(x: float) -> str:
    return repr(float(x))


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# panels

def _parse_value(text, row):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise IngestError(f"row {row}: cannot parse value {text!r}") from None
    if not math.isfinite(v):
        raise IngestError(f"row {row}: non-finite value {text!r}")
    return v


def _transform(var, v, row):
    if var == "rgdp_level":
        if v <= 0:
            raise IngestError(f"row {row}: RGDP level must be positive, got {v}")
        return "y", 400.0 * math.log(v)
    return var, v


def _long_cells(reader):
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["date", "country", "variable", "value"]:
        raise IngestError("row 1: long format needs header date,country,variable,value")
    for row, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != 4:
            raise IngestError(f"row {row}: expected 4 fields, got {len(rec)}")
        date, country, var, val = (c.strip() for c in rec)
        if not val:
            raise IngestError(f"row {row}: missing value")
        yield row, date, country, var, val


def _wide_cells(reader):
    header = next(reader, None)
    if header is None or header[0].strip() != "date":
        raise IngestError("row 1: wide format needs a leading date column")
    cols = []
    for c in header[1:]:
        if ":" not in c:
            raise IngestError(f"row 1: column {c!r} is not of the form country:variable")
        country, var = (s.strip() for s in c.split(":", 1))
        cols.append((country, var))
    for row, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise IngestError(f"row {row}: expected {len(header)} fields, got {len(rec)}")
        date = rec[0].strip()
        for (country, var), val in zip(cols, rec[1:]):
            if not val.strip():
                raise IngestError(f"row {row}: missing value for {country}:{var}")
            yield row, date, country, var, val.strip()


def ingest_csv(path, schema: str = "long") -> DataPanel:
    """
    Read a balanced panel from ``path``.

    Parameters
    ----------
    path : path-like or file object
    schema : {"long", "wide"}

    Raises
    ------
    IngestError
        Unknown variables, unparsable or missing cells, duplicate
        (date, country, variable) entries and non-monotone dates, each with
        its row number; incomplete panels name the missing cell.
    """
    if schema not in ("long", "wide"):
        raise ValueError(f"unknown schema {schema!r}")
    fh = open(path, newline="") if isinstance(path, (str, os.PathLike)) else path
    try:
        reader = csv.reader(fh)
        cells = _long_cells(reader) if schema == "long" else _wide_cells(reader)
        data = {}
        dates = []
        codes = {}
        countries = []
        for row, date, country, var, val in cells:
            if var not in VARIABLES:
                raise IngestError(f"row {row}: unknown variable {var!r}; expected one of {VARIABLES}")
            try:
                code = parse_quarter(date)
            except (ValueError, ConfigError) as exc:
                raise IngestError(f"row {row}: {exc}") from None
            if date not in codes:
                if dates and code <= codes[dates[-1]]:
                    raise IngestError(f"row {row}: date {date} does not follow {dates[-1]}")
                codes[date] = code
                dates.append(date)
            elif date != dates[-1]:
                raise IngestError(f"row {row}: date {date} appears out of order")
            if country not in countries:
                countries.append(country)
            name, v = _transform(var, _parse_value(val, row), row)
            key = (date, country, name)
            if key in data:
                raise IngestError(f"row {row}: duplicate entry for date {date}, country {country}, {name}")
            data[key] = v
    finally:
        if fh is not path:
            fh.close()
    if not dates:
        raise IngestError("file contains no observations")
    for t in range(1, len(dates)):
        if codes[dates[t]] != codes[dates[t - 1]] + 1:
            raise IngestError(f"dates skip a quarter between {dates[t - 1]} and {dates[t]}")
    T, N = len(dates), len(countries)
    y = np.empty((T, N))
    pi = np.empty((T, N))
    for t, d in enumerate(dates):
        for i, c in enumerate(countries):
            for name, arr in (("y", y), ("pi", pi)):
                if (d, c, name) not in data:
                    raise IngestError(f"missing {name} for date {d}, country {c}")
                arr[t, i] = data[(d, c, name)]
    try:
        return DataPanel(tuple(dates), tuple(countries), y, pi)
    except ValueError as exc:
        raise IngestError(str(exc)) from None


def write_panel(panel: DataPanel, path=None, schema: str = "long") -> str:
    """Serialize ``panel`` (output as ``y``); returns the text and writes it if ``path`` is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if schema == "long":
        w.writerow(["date", "country", "variable", "value"])
        for t, d in enumerate(panel.dates):
            for i, c in enumerate(panel.countries):
                w.writerow([d, c, "y", _num(panel.y[t, i])])
                w.writerow([d, c, "pi", _num(panel.pi[t, i])])
    elif schema == "wide":
        cols = [f"{c}:{v}" for c in panel.countries for v in ("y", "pi")]
        w.writerow(["date"] + cols)
        for t, d in enumerate(panel.dates):
            vals = []
            for i in range(panel.N):
                vals += [_num(panel.y[t, i]), _num(panel.pi[t, i])]
            w.writerow([d] + vals)
    else:
        raise ValueError(f"unknown schema {schema!r}")
    text = buf.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text


# ---------------------------------------------------------------------------
# config

def _coerce(name, typ, text):
    raw = text.strip()
    if raw.lower() == "none":
        if "Optional" in str(typ) or "None" in str(typ):
            return None
        raise ConfigError(f"{name}: none is not allowed")
    base = typ
    if typing.get_origin(typ) is typing.Union:
        base = next(a for a in typing.get_args(typ) if a is not type(None))
    try:
        if base is bool:
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        return raw.strip("\"'")
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {base.__name__}") from None


def parse_config_text(text: str) -> dict:
    """Typed ``{key: value}`` mapping from flat config text."""
    hints = typing.get_type_hints(ModelConfig)
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in hints:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, hints[key], val)
    return values


def config_from_values(values: dict, panel: Optional[DataPanel] = None, validate: bool = True) -> ModelConfig:
    """
    Build a :class:`ModelConfig`; dimensions come from ``panel`` when given.

    With a panel, ``q`` defaults to 1 (0 for a single country) and an unset
    ``gamma_H`` tracks the panel length.
    """
    values = dict(values)
    if panel is not None:
        values["N"], values["T"] = panel.N, panel.T
        values.setdefault("q", 1 if panel.N > 1 else 0)
    values.setdefault("N", 1)
    values.setdefault("T", 12)
    values.setdefault("q", min(1, values["N"] - 1))
    cfg = ModelConfig(**values)
    return validate_config(cfg) if validate else cfg


def read_config(path, panel: Optional[DataPanel] = None, validate: bool = True, **overrides) -> ModelConfig:
    """
    Parse a flat ``key = value`` config file.

    ``N`` and ``T`` may be omitted when ``panel`` is given. Keyword
    ``overrides`` take precedence over the file.
    """
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update(overrides)
    return config_from_values(values, panel, validate)


def format_config(cfg: ModelConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = _num(v)
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"


def write_config(cfg: ModelConfig, path) -> None:
    atomic_write(path, format_config(cfg))


# ---------------------------------------------------------------------------
# draw store

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _flatten(obj, prefix=""):
    # yields (name, value) for every dataclass leaf
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        name = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(v):
            yield from _flatten(v, name + ".")
        else:
            yield name, v


def _rebuild(cls, values, prefix=""):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        typ = hints[f.name]
        name = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(typ):
            kwargs[f.name] = _rebuild(typ, values, name + ".")
        else:
            kwargs[f.name] = values[name]
    return cls(**kwargs)


def write_draws(chain: ChainOutput, path=None) -> str:
    """
    Serialize retained draws and run metadata; returns the text.

    Run timing is left out, so a fixed seed gives identical bytes.
    """
    if not chain.draws:
        raise ValueError("chain has no retained draws")
    leaves = list(_flatten(chain.draws[0]))
    fields, constants, columns = [], {}, ["loglik"]
    for name, v in leaves:
        if isinstance(v, str):
            constants[name] = v
            continue
        arr = np.asarray(v, dtype=float)
        fields.append([name, list(arr.shape)])
        if arr.ndim == 0:
            columns.append(name)
        else:
            columns += [name + "[" + ",".join(map(str, ix)) + "]" for ix in np.ndindex(arr.shape)]
    meta = {
        "fields": fields,
        "constants": constants,
        "acceptance": _jsonable(chain.acceptance),
        # wall-clock time stays in manifest.json so the store is reproducible
        "manifest": _jsonable({k: v for k, v in chain.manifest.items() if k != "seconds"}),
        "partial": bool(chain.partial),
    }
    buf = io.StringIO()
    buf.write(DRAWS_MAGIC + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for ll, d in zip(chain.loglik, chain.draws):
        row = [_num(ll)]
        for name, v in _flatten(d):
            if isinstance(v, str):
                if v != constants[name]:
                    raise ValueError(f"field {name} varies across draws")
                continue
            row += [_num(x) for x in np.asarray(v, dtype=float).ravel()]
        if len(row) != len(columns):
            raise ValueError("draws have inconsistent dimensions")
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        atomic_write(path, text)
    return text


def read_draws(path) -> ChainOutput:
    """Inverse of :func:`write_draws`."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(DRAWS_MAGIC):
            raise ValueError(f"{path}: not a draw store (missing header line)")
        meta = json.loads(first[len(DRAWS_MAGIC):])
        reader = csv.reader(fh)
        columns = next(reader)
        rows = [r for r in reader if r]
    width = 1 + sum(int(np.prod(s)) if s else 1 for _, s in meta["fields"])
    if len(columns) != width:
        raise ValueError(f"{path}: header has {len(columns)} columns, metadata implies {width}")
    lls, draws = [], []
    for k, r in enumerate(rows, start=3):
        if len(r) != width:
            raise ValueError(f"{path}: row {k} has {len(r)} fields, expected {width}")
        vals = np.array([float(x) for x in r])
        lls.append(vals[0])
        pos = 1
        values = dict(meta["constants"])
        for name, shape in meta["fields"]:
            n = int(np.prod(shape)) if shape else 1
            chunk = vals[pos:pos + n]
            pos += n
            values[name] = float(chunk[0]) if not shape else chunk.reshape(shape)
        draws.append(_rebuild(ParameterDraw, values))
    return ChainOutput(tuple(draws), np.array(lls), meta["acceptance"], meta["manifest"], meta["partial"])


def write_manifest(manifest: dict, path) -> None:
    """Write a run manifest as sorted JSON, atomically."""
    atomic_write(path, json.dumps(_jsonable(manifest), sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# tidy result tables

def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_num(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def decomposition_csv(record, panel: DataPanel) -> str:
    """Columns ``date,country,component,q16,q50,q84`` over retained draws."""
    from .analysis import QUANTILES

    rows = []
    comps = ("target", "euro_area_trend_shock", "gap_shock", "country_shock")
    qs = {c: np.quantile(getattr(record, c), QUANTILES, axis=0) for c in comps}
    for t, d in enumerate(panel.dates):
        for i, c in enumerate(panel.countries):
            for comp in comps:
                q = qs[comp][:, t, i]
                rows.append([d, c, comp, float(q[0]), float(q[1]), float(q[2])])
    return _table(["date", "country", "component", "q16", "q50", "q84"], rows)


def irf_csv(result, countries) -> str:
    """Columns ``horizon,variable,country,q16,q50,q84``; the gap uses country ``EA``."""
    rows = []
    for h in result.horizons:
        q = result.quantiles["gap"][:, h]
        rows.append([int(h), "gap", "EA", float(q[0]), float(q[1]), float(q[2])])
        for var in ("inflation", "output"):
            for i, c in enumerate(countries):
                q = result.quantiles[var][:, h, i]
                rows.append([int(h), var, c, float(q[0]), float(q[1]), float(q[2])])
    return _table(["horizon", "variable", "country", "q16", "q50", "q84"], rows)


def gap_csv(summary, dates) -> str:
    """Columns ``date,gap_q16,gap_q50,gap_q84,vol_q16,vol_q50,vol_q84``."""
    rows = [
        [d, float(summary.gap_lower[t]), float(summary.gap_median[t]), float(summary.gap_upper[t]),
         float(summary.vol_lower[t]), float(summary.vol_median[t]), float(summary.vol_upper[t])]
        for t, d in enumerate(dates)
    ]
    return _table(["date", "gap_q16", "gap_q50", "gap_q84", "vol_q16", "vol_q50", "vol_q84"], rows)


def gapfilter_csv(estimate, dates) -> str:
    """Columns ``date,trend,cycle``; undefined points are written as ``nan``."""
    rows = [[d, float(estimate.trend[t]), float(estimate.cycle[t])] for t, d in enumerate(dates)]
    return _table(["date", "trend", "cycle"], rows)
