"""Command implementations: simulate, fit, predict, curves, summarize.

Each ``cmd_*`` function takes a :class:`RunConfig` plus explicit overrides,
writes its outputs, and returns a small dict describing what it did so the
functions can be driven from tests as well as from the command line.
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from threadpoolctl import threadpool_limits

from .artifact import FORMAT_VERSION, PosteriorArtifact, dumps_manifest
from .basis import check_spatial_identifiability, fit_tps_basis
from .config import DEFAULTS, RunConfig
from .errors import ConfigError, NumericalError
from .likelihood import EPS, SiteStats, logit_transform
from .predict import marginal_probability_curves, predict_marginal, summarize_B
from .sampler import LowESSWarning, run_chain
from .simulate import simulate
from .tables import (IngestReport, file_digest, iter_reflectance, read_cover_names, read_labels, read_sites,
                     write_csv)

log = logging.getLogger(__name__)

COORDS = ["coord_x", "coord_y"]
WD = ["wavelength_nm", "day_of_year"]
SIMPLEX_TOL = 1e-9


# ---------------------------------------------------------------- covariates

def covariate_table(sites: pd.DataFrame, columns=None, intercept=True, standardize=True) -> list:
    """Standardization constants for every column of X.

    0/1 columns are kept as-is; other columns are centred and divided by
    their sample standard deviation when ``standardize`` is set.  ``mean``,
    ``min`` and ``max`` are in original units.
    """
    if columns is None:
        columns = [c for c in sites.columns if c not in COORDS]
    missing = [c for c in columns if c not in sites.columns]
    if missing:
        raise ConfigError(f"covariate column(s) not in sites table: {', '.join(missing)}")
    table = []
    if intercept:
        table.append({"name": "intercept", "kind": "intercept", "center": 0.0, "scale": 1.0,
                      "mean": 1.0, "min": 1.0, "max": 1.0})
    for name in columns:
        v = sites[name].to_numpy(dtype=float)
        binary = bool(np.isin(v, (0.0, 1.0)).all())
        center, scale = 0.0, 1.0
        if standardize and not binary:
            sd = v.std(ddof=1) if len(v) > 1 else 0.0
            if not sd > 0:
                raise ConfigError(f"covariate {name} is constant; drop it or disable standardization")
            center, scale = float(v.mean()), float(sd)
        table.append({"name": name, "kind": "binary" if binary else "continuous", "center": center,
                      "scale": scale, "mean": float(v.mean()), "min": float(v.min()), "max": float(v.max())})
    if not table:
        raise ConfigError("no covariates: enable the intercept or list covariate columns")
    return table


def design_matrix(sites: pd.DataFrame, table: list) -> np.ndarray:
    cols = []
    for c in table:
        if c["kind"] == "intercept":
            cols.append(np.ones(len(sites)))
            continue
        if c["name"] not in sites.columns:
            raise ConfigError(f"sites table lacks covariate column {c['name']}")
        cols.append((sites[c["name"]].to_numpy(dtype=float) - c["center"]) / c["scale"])
    return np.column_stack(cols)


# ---------------------------------------------------------------- statistics

def accumulate_site_stats(stats: SiteStats, positions, G, r):
    """Add records to per-site statistics; ``positions`` index rows of ``stats``."""
    positions = np.asarray(positions, dtype=np.int64)
    if len(positions) == 0:
        return
    order = np.argsort(positions, kind="stable")
    pos = positions[order]
    starts = np.flatnonzero(np.r_[True, pos[1:] != pos[:-1]])
    ends = np.r_[starts[1:], len(pos)]
    for s, e in zip(starts, ends):
        rows = order[s:e]
        stats.add_records(int(pos[s]), G[rows], r[rows])


def select_added_sites(candidates: list, j_add: int, rule: str = "random", ids=None, seed: int = 0) -> list:
    """Unlabeled sites whose reflectances enter the fit.

    The random rule takes the first ``j_add`` sites of one seeded permutation,
    so selections for increasing ``j_add`` are nested.
    """
    if rule == "list":
        ids = [str(i) for i in (ids or [])]
        unknown = sorted(set(ids) - set(candidates))
        if unknown:
            raise ConfigError(f"fit.j_add_ids not among unlabeled sites with records: {', '.join(unknown[:10])}")
        return ids
    if j_add > len(candidates):
        raise ConfigError(f"J_add = {j_add} exceeds the {len(candidates)} unlabeled sites with reflectance records")
    perm = np.random.default_rng([int(seed), 1]).permutation(len(candidates))
    return [candidates[i] for i in perm[:j_add]]


def _report_dict(rep: IngestReport) -> dict:
    return {"rows_in": rep.rows_in, "accepted": rep.accepted, "rejected": dict(sorted(rep.rejected.items()))}


def _blas_limit(cfg: RunConfig, threads=None):
    n = 1 if cfg["run.deterministic"] else int(threads or cfg["run.threads"])
    return threadpool_limits(limits=max(n, 1))


# ---------------------------------------------------------------- simulate

def _num(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def cmd_simulate(cfg: RunConfig, out_dir) -> dict:
    """Write a synthetic data set plus a ready-to-run fit configuration."""
    sc = cfg.scenario()
    data = simulate(sc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    J = len(data.coords)
    width = max(4, len(str(J)))
    ids = [f"s{j + 1:0{width}d}" for j in range(J)]

    write_csv(out / "sites.csv", ["site_id", *COORDS, "x_cont", "x_bin"],
              ([ids[j], float(data.coords[j, 0]), float(data.coords[j, 1]), float(data.X[j, 1]), int(data.X[j, 2])]
               for j in range(J)))
    write_csv(out / "labels.csv", ["site_id", "cover_type"],
              ([ids[j], int(data.labels[j]) + 1] for j in data.observed))
    write_csv(out / "truth.csv", ["site_id", "true_label"],
              ([ids[j], int(data.labels[j]) + 1] for j in range(J)))
    z = data.reflectance
    w_txt = [_num(v) for v in data.grid[:, 0]]
    d_txt = [_num(v) for v in data.grid[:, 1]]
    write_csv(out / "reflectance.csv", ["site_id", *WD, "reflectance"],
              ([ids[j], w_txt[i], d_txt[i], repr(float(z[j, i]))] for j in range(J) for i in range(len(data.grid))))
    truth = {
        "Gamma": data.truth.Gamma, "B": data.truth.B, "Phi": data.truth.Phi, "sigma2": data.truth.sigma2,
        "label_counts": np.bincount(data.labels, minlength=sc.K), "seed": sc.seed,
    }
    with open(out / "truth_parameters.json", "w", encoding="utf-8") as fh:
        fh.write(dumps_manifest(truth))

    fit_cfg = {k: v for k, v in cfg.values.items()
               if not k.startswith(("simulate.", "paths.")) and v != DEFAULTS[k]}
    fit_cfg.update({
        "paths.reflectance": "reflectance.csv", "paths.sites": "sites.csv", "paths.labels": "labels.csv",
        "paths.output": "output", "model.K": sc.K, "basis.L": sc.L, "basis.M": sc.M,
        "basis.reflectance_knots": "regular", "basis.spatial_knots": "regular",
    })
    fit_cfg.setdefault("run.seed", sc.seed)
    with open(out / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(dict(sorted(fit_cfg.items())), fh, sort_keys=True)

    counts = {
        "reflectance_rows": J * len(data.grid),
        "sites": J,
        "labeled_sites": len(data.observed),
        "labeled_reflectance_rows": len(data.observed) * len(data.grid),
        "label_counts": [int(c) for c in np.bincount(data.labels, minlength=sc.K)],
    }
    return {"out_dir": out, "counts": counts, "truth_sigma2": float(data.truth.sigma2)}


# ---------------------------------------------------------------- fit

def cmd_fit(cfg: RunConfig, force: bool | None = None, threads: int | None = None) -> dict:
    """Select fitting sites, build bases, run the chain, write the artifact."""
    force = cfg["fit.force"] if force is None else force
    K, L, M = cfg["model.K"], cfg["basis.L"], cfg["basis.M"]
    paths = {k: cfg.path(f"paths.{k}") for k in ("reflectance", "sites", "labels")}
    sites, rep_s = read_sites(paths["sites"])
    labels, rep_l = read_labels(paths["labels"], K)
    log.info("%s", rep_s)
    log.info("%s", rep_l)
    orphans = sorted(set(labels.index) - set(sites.index))
    if orphans:
        raise ConfigError(f"labeled sites absent from the sites table: {', '.join(orphans[:20])}")
    cover_names = read_cover_names(cfg.path("paths.cover_names") if cfg["paths.cover_names"] else None, K)

    table = covariate_table(sites, cfg["covariates.columns"], cfg["covariates.intercept"],
                            cfg["covariates.standardize"])
    X_all = design_matrix(sites, table)
    coords = sites[COORDS].to_numpy()
    spatial = fit_tps_basis(coords, M, strategy=cfg["basis.spatial_knots"])
    H_all = spatial.evaluate(coords, point_ids=list(sites.index)).values
    rank = check_spatial_identifiability(X_all, H_all)
    log.info("identifiability: %s", rank)
    if rank.deficient and not force:
        raise ConfigError(f"{rank}: covariates and spatial basis are not identifiable; rerun with --force to override")

    chunk_rows = cfg["predict.chunk_rows"]
    rep_r = IngestReport(paths["reflectance"].name)
    with_records = set()
    for chunk in iter_reflectance(paths["reflectance"], rep_r, chunk_rows):
        with_records.update(chunk["site_id"].unique())
    rep_r.check()
    log.info("%s", rep_r)
    orphans = sorted(with_records - set(sites.index))
    if orphans:
        raise ConfigError(f"reflectance records for sites absent from the sites table: {', '.join(orphans[:20])}")

    labeled_ids = [s for s in sites.index if s in labels.index]
    candidates = [s for s in sites.index if s not in labels.index and s in with_records]
    added = select_added_sites(candidates, cfg["fit.j_add"], cfg["fit.j_add_rule"], cfg["fit.j_add_ids"],
                               cfg["run.seed"])
    fit_ids = labeled_ids + added
    pos = {s: i for i, s in enumerate(fit_ids)}
    parts = [c[c["site_id"].isin(list(pos))] for c in iter_reflectance(paths["reflectance"], IngestReport("pass2"),
                                                                  chunk_rows)]
    rec = pd.concat(parts, ignore_index=True)
    if len(rec) == 0:
        raise ConfigError("no reflectance records at the fitting sites")
    wd = rec[WD].to_numpy()
    refl_basis = fit_tps_basis(wd, L, strategy=cfg["basis.reflectance_knots"])
    G = refl_basis.evaluate(wd).values
    r = logit_transform(rec["reflectance"].to_numpy(), EPS, ids=rec["site_id"].to_numpy())

    site_row = {s: i for i, s in enumerate(sites.index)}
    rows = np.array([site_row[s] for s in fit_ids], dtype=int)
    y = np.array([labels[s] - 1 for s in labeled_ids] + [-1] * len(added), dtype=int)
    stats = SiteStats.empty(fit_ids, L, X_all[rows], H_all[rows], labels=y)
    accumulate_site_stats(stats, rec["site_id"].map(pos).to_numpy(), G, r)

    dims = {"L": L, "M": M, "P": X_all.shape[1], "K": K}
    log.info("fitting %d labeled + %d added sites (%d records), dims %s",
             len(labeled_ids), len(added), len(rec), dims)
    with _blas_limit(cfg, threads), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LowESSWarning)
        out = run_chain(stats, cfg.prior(), cfg.chain(), dims=dims)
    for w in caught:
        log.warning("%s", w.message)

    manifest = {
        "format_version": FORMAT_VERSION,
        "dims": dims,
        "cover_names": cover_names,
        "eps": EPS,
        "covariates": table,
        "reflectance_basis": refl_basis.to_dict(),
        "spatial_basis": spatial.to_dict(),
        "config": cfg.snapshot(),
        "digests": {k: file_digest(p) for k, p in paths.items()},
        "fit_sites": {"labeled": labeled_ids, "added": added},
        "n_fit_records": int(len(rec)),
        "ingest": {"reflectance": _report_dict(rep_r), "sites": _report_dict(rep_s), "labels": _report_dict(rep_l)},
        "identifiability": {"rank": rank.rank, "n_columns": rank.n_columns},
        "diagnostics": {"ess": out.ess, "widths": out.widths, "n_draws": len(out.draws)},
    }
    out_dir = cfg.path("paths.output")
    art = PosteriorArtifact(out.draws, out.logpost_trace, manifest)
    art_path = art.save(out_dir / "artifact")

    summary = summarize_B(out.draws, [c["name"] for c in table])
    write_csv(out_dir / "b_summary.csv", list(summary.columns), summary.itertuples(index=False))
    timing_path = out_dir / "timing.csv"
    header = ["j_add", "n_fit_sites", "n_fit_records", "burnin_seconds", "sampling_seconds", "total_seconds"]
    row = [len(added), len(fit_ids), len(rec), *(float(out.timings[k]) for k in header[3:])]
    old = []
    if timing_path.exists():
        old = pd.read_csv(timing_path, dtype=str, keep_default_na=False).values.tolist()
    write_csv(timing_path, header, old + [row])
    return {
        "artifact": art_path, "n_draws": len(out.draws), "j_add": len(added), "n_fit_records": len(rec),
        "timings": out.timings, "b_summary": summary, "min_ess_B": min(
            (v for k, v in out.ess.items() if k.startswith("B[")), default=float("nan")),
    }


# ---------------------------------------------------------------- predict

def _artifact_path(cfg: RunConfig, artifact) -> Path:
    return Path(artifact) if artifact else cfg.path("paths.output") / "artifact"


def read_truth(path) -> pd.Series:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if not {"site_id", "true_label"} <= set(df.columns):
        raise ConfigError(f"{path}: expected columns site_id,true_label")
    return pd.Series(df["true_label"].astype(int).to_numpy(), index=df["site_id"].str.strip().to_numpy())


def cmd_predict(cfg: RunConfig, artifact=None, reflectance=None, sites=None, out=None, truth=None,
                allow_new_data: bool = False, threads: int | None = None) -> dict:
    """Stream reflectances into per-site statistics and predict every site."""
    art = PosteriorArtifact.load(_artifact_path(cfg, artifact))
    refl_path = Path(reflectance) if reflectance else cfg.path("paths.reflectance")
    sites_path = Path(sites) if sites else cfg.path("paths.sites")
    current = {"reflectance": file_digest(refl_path), "sites": file_digest(sites_path)}
    changed = [k for k, v in current.items() if art.manifest["digests"].get(k) != v]
    if changed and not allow_new_data:
        raise ConfigError(f"{' and '.join(changed)} input differs from the training data; "
                          "pass --allow-new-data to predict at new sites")

    site_df, rep_s = read_sites(sites_path)
    log.info("%s", rep_s)
    X = design_matrix(site_df, art.covariates)
    H = art.spatial_basis.evaluate(site_df[COORDS].to_numpy(), point_ids=list(site_df.index)).values
    L = art.dims["L"]
    stats = SiteStats.empty(list(site_df.index), L, X, H)
    pos = pd.Series(np.arange(len(site_df)), index=site_df.index)
    refl_basis = art.reflectance_basis
    rep_r = IngestReport(refl_path.name)
    skipped = Counter()
    for chunk in iter_reflectance(refl_path, rep_r, cfg["predict.chunk_rows"]):
        j = chunk["site_id"].map(pos)
        unknown = j.isna().to_numpy()
        if unknown.any():
            skipped.update(chunk["site_id"][unknown])
            chunk, j = chunk[~unknown], j[~unknown]
        if len(chunk) == 0:
            continue
        G = refl_basis.evaluate(chunk[WD].to_numpy()).values
        r = logit_transform(chunk["reflectance"].to_numpy(), art.eps, ids=chunk["site_id"].to_numpy())
        accumulate_site_stats(stats, j.to_numpy(dtype=np.int64), G, r)
    rep_r.check()
    log.info("%s", rep_r)
    if skipped:
        log.warning("skipped %d reflectance rows from %d site(s) absent from the sites table: %s",
                    sum(skipped.values()), len(skipped), ", ".join(sorted(skipped)[:20]))

    stride = cfg["predict.stride"]
    n_threads = 1 if cfg["run.deterministic"] else int(threads or cfg["run.threads"])
    with _blas_limit(cfg, threads):
        preds = predict_marginal(art.draws, stats, stride=stride, threads=n_threads)
    K = art.dims["K"]
    for p in preds:
        for name, v in (("y_posterior", p.y_posterior), ("suitability", p.suitability_mean)):
            if abs(v.sum() - 1.0) > SIMPLEX_TOL or (v < 0).any():
                raise NumericalError(f"site {p.site_id}: {name} is not a simplex")

    out_path = Path(out) if out else cfg.path("paths.output") / "predictions.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    ks = range(1, K + 1)
    header = (["site_id"] + [f"y_prob_{k}" for k in ks] + ["y_mode"] + [f"suit_mean_{k}" for k in ks]
              + [f"suit_lower_{k}" for k in ks] + [f"suit_upper_{k}" for k in ks] + ["n_records", "flags"])
    write_csv(out_path, header, (
        [p.site_id, *map(float, p.y_posterior), p.y_mode + 1, *map(float, p.suitability_mean),
         *map(float, p.suitability_lower), *map(float, p.suitability_upper), p.n_records, ";".join(p.flags)]
        for p in preds))

    result = {"predictions": out_path, "n_sites": len(preds), "n_draws_used": len(range(0, len(art.draws), stride)),
              "skipped_rows": sum(skipped.values())}
    if truth:
        result.update(score_predictions(preds, read_truth(truth), set(art.manifest["fit_sites"]["labeled"])))
    meta = {
        "stride": stride, "n_draws_used": result["n_draws_used"], "cover_names": art.cover_names,
        "ingest": {"reflectance": _report_dict(rep_r), "sites": _report_dict(rep_s)},
        "skipped_rows": result["skipped_rows"], "digests": current,
        "score": {k: result[k] for k in ("n_scored", "accuracy", "median_max_prob") if k in result},
    }
    meta_path = out_path.with_suffix(".json")
    tmp = meta_path.with_name(meta_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, meta_path)
    return result


def score_predictions(preds, truth: pd.Series, exclude=()) -> dict:
    """Mode accuracy and median max-probability over sites with known labels."""
    scored = [p for p in preds if p.site_id in truth.index and p.site_id not in exclude]
    if not scored:
        return {"n_scored": 0, "accuracy": float("nan"), "median_max_prob": float("nan")}
    hits = np.array([p.y_mode + 1 == truth[p.site_id] for p in scored])
    maxp = np.array([p.y_posterior.max() for p in scored])
    return {"n_scored": len(scored), "accuracy": float(hits.mean()), "median_max_prob": float(np.median(maxp))}


# ---------------------------------------------------------------- curves, summarize

def parse_grid(spec: str) -> np.ndarray:
    """``"lo:hi:n"`` -> n evenly spaced values; a single number -> one value."""
    try:
        parts = [float(p) for p in str(spec).split(":")]
    except ValueError:
        raise ConfigError(f"grid spec {spec!r} must be 'lo:hi:n' or a number") from None
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[2] < 1 or parts[2] != int(parts[2]):
        raise ConfigError(f"grid spec {spec!r} must be 'lo:hi:n' with integer n >= 1")
    return np.linspace(parts[0], parts[1], int(parts[2]))


def resolve_covariate(names: list, covariate) -> int:
    """Column of X from a name or a 1-based index."""
    if covariate in names:
        return names.index(covariate)
    try:
        idx = int(covariate) - 1
    except (TypeError, ValueError):
        raise ConfigError(f"unknown covariate {covariate!r}; available: {', '.join(names)}") from None
    if not 0 <= idx < len(names):
        raise ConfigError(f"covariate index {covariate} outside 1..{len(names)}")
    return idx


def cmd_curves(cfg: RunConfig, covariate, grid=None, artifact=None, out=None) -> dict:
    """Marginal cover-type probability curves along one covariate, original units."""
    art = PosteriorArtifact.load(_artifact_path(cfg, artifact))
    table = art.covariates
    idx = resolve_covariate(art.covariate_names, covariate)
    cov = table[idx]
    if cov["kind"] == "intercept":
        raise ConfigError("the intercept is constant and has no curve")
    values = parse_grid(grid) if grid is not None else np.linspace(cov["min"], cov["max"], 50)
    x_ref = np.array([(c["mean"] - c["center"]) / c["scale"] for c in table])
    curves = marginal_probability_curves(art.draws, idx, (values - cov["center"]) / cov["scale"], x_ref)
    frame = curves.to_frame(values)
    frame.insert(0, "covariate", cov["name"])
    out_path = Path(out) if out else cfg.path("paths.output") / f"curves_{cov['name']}.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out_path, list(frame.columns), frame.itertuples(index=False))
    return {"curves": out_path, "frame": frame}


def cmd_summarize(cfg: RunConfig, artifact=None, out=None) -> dict:
    """B quantile table and chain diagnostics from an artifact."""
    art = PosteriorArtifact.load(_artifact_path(cfg, artifact))
    summary = summarize_B(art.draws, art.covariate_names)
    out_path = Path(out) if out else cfg.path("paths.output") / "b_summary.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out_path, list(summary.columns), summary.itertuples(index=False))
    ess = art.manifest["diagnostics"]["ess"]
    ess_B = [v for k, v in ess.items() if k.startswith("B[")]
    return {
        "b_summary": summary, "path": out_path, "n_draws": len(art.draws),
        "min_ess_B": min(ess_B) if ess_B else float("nan"),
        "min_ess": min(ess.values()) if ess else float("nan"),
        "fit_sites": {k: len(v) for k, v in art.manifest["fit_sites"].items()},
    }
