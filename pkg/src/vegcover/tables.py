"""CSV ingestion with row accounting.

Schemas (UTF-8, header row required, no blank fields):

* reflectance: ``site_id,wavelength_nm,day_of_year,reflectance``
* sites: ``site_id,coord_x,coord_y,<covariate columns...>``
* labels: ``site_id,cover_type`` with 1-based integer cover types
* cover names (optional): ``cover_type,name``

Rejected rows are counted by reason; ``rows_in == accepted + rejected``
is asserted for every file read.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .errors import ConfigError

log = logging.getLogger(__name__)

REFLECTANCE_COLUMNS = ["site_id", "wavelength_nm", "day_of_year", "reflectance"]


@dataclass
class IngestReport:
    name: str
    rows_in: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)

    def reject(self, reason: str, n: int):
        if n:
            self.rejected[reason] += int(n)

    @property
    def n_rejected(self) -> int:
        return sum(self.rejected.values())

    def check(self):
        assert self.rows_in == self.accepted + self.n_rejected, f"{self.name}: row accounting mismatch"

    def __str__(self):
        reasons = ", ".join(f"{k}: {v}" for k, v in sorted(self.rejected.items())) or "none"
        return f"{self.name}: {self.rows_in} rows in, {self.accepted} accepted, {self.n_rejected} rejected ({reasons})"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require_columns(df, required, path):
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ConfigError(f"{path}: missing column(s) {', '.join(missing)}")


def _read_str_csv(path, **kw):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8", **kw)


def _blank_rows(df) -> np.ndarray:
    return (df.apply(lambda c: c.str.strip() == "")).any(axis=1).to_numpy()


def read_sites(path) -> tuple[pd.DataFrame, IngestReport]:
    """Sites indexed by ``site_id`` with float columns."""
    df = _read_str_csv(path)
    _require_columns(df, ["site_id", "coord_x", "coord_y"], path)
    rep = IngestReport(Path(path).name, rows_in=len(df))
    blank = _blank_rows(df)
    rep.reject("blank field", blank.sum())
    df = df[~blank]
    values = df.drop(columns="site_id").apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(values.to_numpy(dtype=float)).all(axis=1)
    rep.reject("non-numeric value", bad.sum())
    values = values[~bad]
    values.index = df["site_id"][~bad].str.strip().to_numpy()
    values.index.name = "site_id"
    dup = values.index.duplicated()
    if dup.any():
        raise ConfigError(f"{path}: duplicate site ids {', '.join(values.index[dup][:10])}")
    rep.accepted = len(values)
    rep.check()
    return values.astype(float), rep


def read_labels(path, K: int) -> tuple[pd.Series, IngestReport]:
    """1-based cover types indexed by ``site_id``."""
    df = _read_str_csv(path)
    _require_columns(df, ["site_id", "cover_type"], path)
    rep = IngestReport(Path(path).name, rows_in=len(df))
    blank = _blank_rows(df[["site_id", "cover_type"]])
    rep.reject("blank field", blank.sum())
    df = df[~blank]
    ct = pd.to_numeric(df["cover_type"], errors="coerce")
    ok = ct.notna() & (ct == ct.round())
    rep.reject("non-integer cover type", (~ok).sum())
    df, ct = df[ok], ct[ok].astype(int)
    out_of_range = (ct < 1) | (ct > K)
    if out_of_range.any():
        raise ConfigError(f"{path}: cover types must be in 1..{K}; got {sorted(set(ct[out_of_range]))}")
    labels = pd.Series(ct.to_numpy(), index=df["site_id"].str.strip().to_numpy(), name="cover_type")
    if labels.index.duplicated().any():
        raise ConfigError(f"{path}: duplicate labeled site ids")
    rep.accepted = len(labels)
    rep.check()
    return labels, rep


def read_cover_names(path, K: int) -> list:
    if path is None:
        return [f"type{k}" for k in range(1, K + 1)]
    df = _read_str_csv(path)
    _require_columns(df, ["cover_type", "name"], path)
    names = {int(r.cover_type): r.name.strip() for r in df.itertuples()}
    return [names.get(k, f"type{k}") for k in range(1, K + 1)]


def iter_reflectance(path, report: IngestReport, chunk_rows: int = 200_000) -> Iterator[pd.DataFrame]:
    """Validated reflectance chunks with typed columns.

    Rows with blanks, non-numeric values, reflectance outside [0, 1] or a
    day of year outside 1..366 are rejected and counted in ``report``.
    """
    reader = _read_str_csv(path, chunksize=chunk_rows)
    for chunk in reader:
        _require_columns(chunk, REFLECTANCE_COLUMNS, path)
        chunk = chunk[REFLECTANCE_COLUMNS]
        report.rows_in += len(chunk)
        if len(chunk) == 0:
            continue
        blank = _blank_rows(chunk)
        report.reject("blank field", blank.sum())
        chunk = chunk[~blank]
        num = chunk[REFLECTANCE_COLUMNS[1:]].apply(pd.to_numeric, errors="coerce")
        finite = np.isfinite(num.to_numpy(dtype=float)).all(axis=1)
        report.reject("non-numeric value", (~finite).sum())
        chunk, num = chunk[finite], num[finite]
        doy = num["day_of_year"]
        ok_doy = (doy == doy.round()) & (doy >= 1) & (doy <= 366)
        report.reject("day_of_year outside 1..366", (~ok_doy).sum())
        chunk, num = chunk[ok_doy], num[ok_doy]
        z = num["reflectance"]
        ok_z = (z >= 0) & (z <= 1)
        report.reject("reflectance outside [0, 1]", (~ok_z).sum())
        chunk, num = chunk[ok_z], num[ok_z]
        report.accepted += len(chunk)
        yield pd.DataFrame({
            "site_id": chunk["site_id"].str.strip().to_numpy(),
            "wavelength_nm": num["wavelength_nm"].to_numpy(dtype=float),
            "day_of_year": num["day_of_year"].to_numpy(dtype=float),
            "reflectance": num["reflectance"].to_numpy(dtype=float),
        })


def fmt(x) -> str:
    """Shortest round-trip decimal text for a float."""
    return repr(float(x))


def write_csv(path, header, rows):
    """Write rows with full-precision floats; atomic via rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    os.replace(tmp, path)
