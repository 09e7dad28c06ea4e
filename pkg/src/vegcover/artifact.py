"""Posterior artifact: a directory binding draws to the exact training basis.

Layout::

    manifest.json   dims, covariate table, both bases, config snapshot,
                    input digests, fitting site lists, diagnostics
    draws.csv       one row per retained draw, one column per parameter
    logpost.csv     log posterior at every sweep

All floats are written as the shortest decimal that round-trips, so
save -> load -> save reproduces identical bytes.  Wall-clock timings are
kept out of the artifact so identical runs give identical artifacts.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import TPSBasis
from .errors import ConfigError
from .sampler import PosteriorDraws

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
DRAWS = "draws.csv"
LOGPOST = "logpost.csv"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_manifest(manifest: dict) -> str:
    return json.dumps(_jsonable(manifest), sort_keys=True, indent=1, allow_nan=False) + "\n"


@dataclass
class PosteriorArtifact:
    draws: PosteriorDraws
    logpost: np.ndarray
    manifest: dict

    @property
    def dims(self) -> dict:
        return dict(self.manifest["dims"])

    @property
    def reflectance_basis(self) -> TPSBasis:
        return TPSBasis.from_dict(self.manifest["reflectance_basis"])

    @property
    def spatial_basis(self) -> TPSBasis:
        return TPSBasis.from_dict(self.manifest["spatial_basis"])

    @property
    def covariates(self) -> list:
        return self.manifest["covariates"]

    @property
    def covariate_names(self) -> list:
        return [c["name"] for c in self.covariates]

    @property
    def cover_names(self) -> list:
        return self.manifest["cover_names"]

    @property
    def eps(self) -> float:
        return self.manifest["eps"]

    def save(self, path) -> Path:
        """Write the artifact directory atomically (temp directory + rename)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
        try:
            tmp.chmod(0o755)
            with open(tmp / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(dumps_manifest(self.manifest))
            names, values = self.draws.flat()
            with open(tmp / DRAWS, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(names)
                w.writerows([repr(float(v)) for v in row] for row in values)
            with open(tmp / LOGPOST, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["sweep", "logpost"])
                w.writerows([i + 1, repr(float(v))] for i, v in enumerate(self.logpost))
            old = None
            if path.exists():
                old = path.with_name(f".{path.name}.old")
                if old.exists():
                    shutil.rmtree(old)
                os.replace(path, old)
            os.replace(tmp, path)
            if old is not None:
                shutil.rmtree(old)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return path

    @classmethod
    def load(cls, path) -> "PosteriorArtifact":
        path = Path(path)
        if not (path / MANIFEST).exists():
            raise ConfigError(f"{path} is not a posterior artifact (no {MANIFEST})")
        with open(path / MANIFEST, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"{path}: unsupported artifact format {manifest.get('format_version')!r}")
        with open(path / DRAWS, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        names, values = rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        draws = PosteriorDraws.from_flat(names, values, manifest["dims"])
        with open(path / LOGPOST, encoding="utf-8", newline="") as fh:
            lp = np.array([float(r[1]) for r in list(csv.reader(fh))[1:]], dtype=float)
        return cls(draws, lp, manifest)
