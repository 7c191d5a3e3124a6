"""CSV ingestion and artifact export.

Response files are long format with header ``curve_id,t,y``; covariate files
have header ``curve_id,x_1,...,x_p`` (any covariate names are accepted after
the first column).  Row numbers in errors count the header as row 1.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .fda import FunctionalDataset

RESPONSE_HEADER = ("curve_id", "t", "y")
DRAWS_HEADER = ("iteration", "parameter_name", "value")
CURVES_HEADER = ("l", "t", "estimate", "lower", "upper")


def _rows(path):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, 0, None, f"cannot open file: {exc.strerror}") from exc
    with fh:
        try:
            rows = list(csv.reader(fh))
        except (csv.Error, UnicodeDecodeError) as exc:
            raise ParseError(path, 0, None, f"not a UTF-8 CSV file: {exc}") from exc
    if not rows:
        raise ParseError(path, 1, None, "missing header row")
    return rows


def _number(path, row, column, text):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(path, row, column, f"cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise ParseError(path, row, column, f"non-finite value {text!r}")
    return v


def _check_width(path, rownum, row, header):
    if len(row) != len(header):
        col = header[len(row)] if len(row) < len(header) else None
        raise ParseError(path, rownum, col, f"expected {len(header)} fields, found {len(row)}")


def read_response_csv(path):
    """Parse a long-format response file into ``{curve_id: (t, y)}``.

    Curves keep their order of first appearance; points are sorted by t.
    """
    rows = _rows(path)
    header = tuple(h.strip() for h in rows[0])
    if header != RESPONSE_HEADER:
        raise ParseError(path, 1, None, f"header must be {','.join(RESPONSE_HEADER)}, found {','.join(header)}")
    curves: dict = {}
    seen: dict = {}
    for rownum, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        _check_width(path, rownum, row, header)
        cid = row[0].strip()
        if not cid:
            raise ParseError(path, rownum, "curve_id", "empty curve id")
        t = _number(path, rownum, "t", row[1])
        y = _number(path, rownum, "y", row[2])
        key = (cid, t)
        if key in seen:
            raise ParseError(path, rownum, "t", f"duplicate point t={t} for curve {cid} (first at row {seen[key]})")
        seen[key] = rownum
        curves.setdefault(cid, []).append((t, y))
    if not curves:
        raise ParseError(path, 2, None, "no data rows")
    out = {}
    for cid, pts in curves.items():
        pts.sort()
        arr = np.array(pts)
        out[cid] = (arr[:, 0], arr[:, 1])
    return out


def read_covariates_csv(path):
    """Parse a covariate file; returns ``(curve_ids, labels, X)`` with X p x m."""
    rows = _rows(path)
    header = tuple(h.strip() for h in rows[0])
    if len(header) < 2 or header[0] != "curve_id":
        raise ParseError(path, 1, None, "header must be curve_id followed by at least one covariate")
    if len(set(header)) != len(header):
        raise ParseError(path, 1, None, "duplicate column names in header")
    ids, values, first = [], [], {}
    for rownum, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        _check_width(path, rownum, row, header)
        cid = row[0].strip()
        if not cid:
            raise ParseError(path, rownum, "curve_id", "empty curve id")
        if cid in first:
            raise ParseError(path, rownum, "curve_id", f"duplicate curve id {cid} (first at row {first[cid]})")
        first[cid] = rownum
        ids.append(cid)
        values.append([_number(path, rownum, name, text) for name, text in zip(header[1:], row[1:])])
    if not ids:
        raise ParseError(path, 2, None, "no data rows")
    return tuple(ids), header[1:], np.array(values).T


def load_dataset(response_path, covariate_path, domain=None) -> FunctionalDataset:
    """Join the two files on curve_id, in covariate-file order."""
    curves = read_response_csv(response_path)
    ids, labels, X = read_covariates_csv(covariate_path)
    missing = [c for c in ids if c not in curves]
    if missing:
        raise ValidationError(f"curves {missing[:5]} have covariates but no responses in {response_path}")
    extra = [c for c in curves if c not in set(ids)]
    if extra:
        raise ValidationError(f"curves {extra[:5]} have responses but no covariates in {covariate_path}")
    return FunctionalDataset(
        curves=tuple(curves[c][1] for c in ids),
        grids=tuple(curves[c][0] for c in ids),
        covariates=X,
        domain=domain,
        curve_labels=ids,
        covariate_labels=labels,
    )


def write_dataset(data: FunctionalDataset, response_path, covariate_path):
    ids = data.curve_labels or tuple(str(i + 1) for i in range(data.m))
    labels = data.covariate_labels or tuple(f"x_{l + 1}" for l in range(data.p))
    with open(response_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESPONSE_HEADER)
        for cid, t, y in zip(ids, data.grids, data.curves):
            w.writerows((cid, repr(float(a)), repr(float(b))) for a, b in zip(t, y))
    with open(covariate_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("curve_id",) + tuple(labels))
        for i, cid in enumerate(ids):
            w.writerow((cid,) + tuple(repr(float(v)) for v in data.covariates[:, i]))


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(obj, path):
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, None, exc.msg) from None


def write_draws(draws, out_dir):
    """One long-format CSV per chain plus a JSON snapshot of the run settings."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = draws.parameter_names()
    paths = []
    for c in range(draws.n_chains):
        series = [draws.series(n)[c] for n in names]
        path = out_dir / f"draws_chain{c + 1}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(DRAWS_HEADER)
            for d, it in enumerate(draws.iterations):
                w.writerows((int(it), n, repr(float(s[d]))) for n, s in zip(names, series))
        paths.append(path)
    write_json(
        dict(seed=draws.seed, gibbs=draws.config, hyperparameters=draws.hyperparameters, K=draws.K, p=draws.p),
        out_dir / "sampler_config.json",
    )
    return paths


def read_draws_csv(path):
    """``{parameter_name: (iterations, values)}`` from one chain file."""
    rows = _rows(path)
    if tuple(rows[0]) != DRAWS_HEADER:
        raise ParseError(path, 1, None, f"header must be {','.join(DRAWS_HEADER)}")
    acc: dict = {}
    for rownum, row in enumerate(rows[1:], start=2):
        _check_width(path, rownum, row, DRAWS_HEADER)
        it = _number(path, rownum, "iteration", row[0])
        acc.setdefault(row[1], []).append((it, _number(path, rownum, "value", row[2])))
    return {k: (np.array([a for a, _ in v], dtype=int), np.array([b for _, b in v])) for k, v in acc.items()}


def write_curves_csv(summary, path):
    """Gated coefficient curves with pointwise bands, long format (l is 1-based)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVES_HEADER)
        for l in range(summary.p):
            for j, t in enumerate(summary.grid):
                w.writerow((l + 1, repr(float(t)), repr(float(summary.coefficient_curves[l, j]) + 0.0),
                            repr(float(summary.band_lower[l, j]) + 0.0), repr(float(summary.band_upper[l, j]) + 0.0)))


def read_curves_csv(path):
    rows = _rows(path)
    if tuple(rows[0]) != CURVES_HEADER:
        raise ParseError(path, 1, None, f"header must be {','.join(CURVES_HEADER)}")
    out = []
    for rownum, row in enumerate(rows[1:], start=2):
        _check_width(path, rownum, row, CURVES_HEADER)
        out.append([_number(path, rownum, name, v) for name, v in zip(CURVES_HEADER, row)])
    return np.array(out)


def write_fitted_csv(data: FunctionalDataset, yhat, path):
    ids = data.curve_labels or tuple(str(i + 1) for i in range(data.m))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("curve_id", "t", "y", "fitted"))
        for cid, t, y, f in zip(ids, data.grids, data.curves, yhat):
            w.writerows((cid, repr(float(a)), repr(float(b)), repr(float(c))) for a, b, c in zip(t, y, f))


def write_metrics(report, out_dir, **extra):
    out_dir = Path(out_dir)
    write_json({**extra, **report.to_dict()}, out_dir / "metrics.json")
    (out_dir / "metrics.csv").write_text(report.to_csv_row(**extra), encoding="utf-8")
