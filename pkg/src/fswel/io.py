"""File formats: subject CSV, YAML run configuration, JSON result files."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from fswel import __version__
from fswel.data import MISSING_G, Dataset
from fswel.errors import InvariantViolation, SchemaError
from fswel.genetics import PROXY_CONFIGS, PROXY_FIELDS, PROXY_INDEX
from fswel.model import ModelSpec

REQUIRED = ("y", "r", "g", "proxy_kind")
PROXY_COLUMNS = ("gs", "gc", "gm", "gf")


@dataclass
class ModelConfig:
    """Model declaration as written in the run configuration.

    ``columns`` are raw data columns. Columns named in ``categorical`` are
    expanded to indicators ``col[level]`` for every non-reference level.
    """

    columns: tuple
    assoc_terms: tuple
    miss_terms: tuple
    categorical: dict = field(default_factory=dict)
    controls_only: bool = False
    mar_terms: tuple = None

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("covariates", "assoc_terms", "miss_terms"):
            if key not in d:
                raise ValueError(f"model section is missing {key!r}")
        unknown = set(d) - {"covariates", "assoc_terms", "miss_terms", "categorical", "controls_only", "mar_terms"}
        if unknown:
            raise ValueError(f"unknown model options: {sorted(unknown)}")
        mar = d.get("mar_terms")
        return cls(
            columns=tuple(d["covariates"]),
            assoc_terms=tuple(d["assoc_terms"]),
            miss_terms=tuple(str(t) for t in d["miss_terms"]),
            categorical=d.get("categorical") or {},
            controls_only=bool(d.get("controls_only", False)),
            mar_terms=tuple(str(t) for t in mar) if mar is not None else None,
        )

    def expanded(self):
        names = []
        for col in self.columns:
            if col in self.categorical:
                cat = self.categorical[col]
                ref = str(cat["reference"])
                names += [f"{col}[{lv}]" for lv in map(str, cat["levels"]) if lv != ref]
            else:
                names.append(col)
        return tuple(names)

    def spec(self):
        return ModelSpec(self.expanded(), self.assoc_terms, self.miss_terms, self.controls_only, self.mar_terms)


def _int_field(raw, name, rownum, allowed):
    v = raw.get(name, "")
    v = "" if v is None else v.strip()
    if v == "":
        return None
    try:
        iv = int(float(v))
    except ValueError:
        raise SchemaError(f"not a number: {v!r}", row=rownum, column=name) from None
    if iv != float(v) or iv not in allowed:
        raise SchemaError(f"value {v!r} not in {sorted(allowed)}", row=rownum, column=name)
    return iv


def load_dataset(path, model: ModelConfig):
    """Read and validate a subject CSV.

    Returns the dataset and an ingestion report with counts and the
    enumerated covariate patterns.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        header = reader.fieldnames or []
        for col in REQUIRED + tuple(model.columns):
            if col not in header:
                raise SchemaError(f"missing column {col!r} in header", row=1, column=col)
        ys, xs, rs, gs, proxies, ids, weights = [], [], [], [], [], [], []
        names = model.expanded()
        for k, raw in enumerate(reader):
            rownum = k + 2  # 1-based, header is row 1
            rid = (raw.get("id") or str(k + 1)).strip()
            y = _int_field(raw, "y", rownum, {0, 1})
            r = _int_field(raw, "r", rownum, {0, 1})
            if y is None or r is None:
                raise SchemaError("y and r are required", row=rownum)
            g = _int_field(raw, "g", rownum, {0, 1, 2})
            if (g is not None) != (r == 1):
                raise InvariantViolation("genotype must be present iff r=1", row=rid)
            kind = (raw.get("proxy_kind") or "none").strip() or "none"
            if kind not in PROXY_FIELDS:
                raise SchemaError(f"unknown proxy_kind {kind!r}", row=rownum, column="proxy_kind")
            rel = {c: _int_field(raw, c, rownum, {0, 1, 2}) for c in PROXY_COLUMNS}
            proxies.append(_proxy_from_fields(kind, rel, rid))
            xs.append(_covariates(raw, model, rownum))
            ys.append(y)
            rs.append(r)
            gs.append(MISSING_G if g is None else g)
            ids.append(rid)
            w = (raw.get("weight") or "").strip()
            weights.append(float(w) if w else 1.0)
    if not ys:
        raise SchemaError("no records in data file")
    data = Dataset(names, ys, np.array(xs, dtype=float).reshape(len(ys), len(names)), rs, gs, proxies, weights, ids)
    report = data.summary()
    patterns = np.unique(data.x, axis=0)
    report["patterns"] = [dict(zip(names, map(float, p))) for p in patterns]
    return data, report


def _covariates(raw, model, rownum):
    out = []
    for col in model.columns:
        v = (raw.get(col) or "").strip()
        if v == "":
            raise SchemaError("empty covariate value", row=rownum, column=col)
        if col in model.categorical:
            cat = model.categorical[col]
            levels = list(map(str, cat["levels"]))
            if v not in levels:
                raise SchemaError(f"level {v!r} not declared", row=rownum, column=col)
            out += [1.0 if v == lv else 0.0 for lv in levels if lv != str(cat["reference"])]
        else:
            try:
                out.append(float(v))
            except ValueError:
                raise SchemaError(f"not a number: {v!r}", row=rownum, column=col) from None
            if not np.isfinite(out[-1]):
                raise SchemaError("non-finite covariate", row=rownum, column=col)
    return out


def _proxy_from_fields(kind, rel, rid):
    present = {c for c, v in rel.items() if v is not None}
    if kind == "one_parent":
        if len(present) != 1 or not present <= {"gm", "gf"}:
            raise InvariantViolation("one_parent needs exactly one of gm, gf", row=rid)
        return PROXY_INDEX[(kind, (rel[present.pop()],))]
    need = set(PROXY_FIELDS[kind])
    if present != need:
        raise InvariantViolation(f"{kind} proxy needs columns {sorted(need) or 'none'}, got {sorted(present)}", row=rid)
    return PROXY_INDEX[(kind, tuple(rel[c] for c in PROXY_FIELDS[kind]))]


def write_dataset(data: Dataset, path):
    """Write a dataset in the subject CSV schema (covariates as numeric columns)."""
    cols = ["id", "y", *data.covariates, "r", "g", "proxy_kind", *PROXY_COLUMNS]
    with_w = not np.all(data.weight == 1.0)
    if with_w:
        cols.append("weight")
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for i in range(len(data)):
            kind, gts = PROXY_CONFIGS[data.proxy[i]]
            rel = dict(zip(PROXY_FIELDS[kind], gts))
            if kind == "one_parent":
                rel = {"gm": rel["gp"]}
            row = [data.ids[i], int(data.y[i]), *(repr(float(v)) for v in data.x[i]), int(data.r[i])]
            row.append("" if data.g[i] < 0 else int(data.g[i]))
            row.append(kind)
            row += ["" if rel.get(c) is None else rel[c] for c in PROXY_COLUMNS]
            if with_w:
                row.append(repr(float(data.weight[i])))
            wr.writerow(row)


def load_config(path):
    with Path(path).open() as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise ValueError("configuration must be a mapping")
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(cfg, seed=None):
    return {"software": "fswel", "version": __version__, "config_hash": config_hash(cfg), "seed": seed}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path):
    text = json.dumps(_jsonable(obj), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")
    return text


def load_json(path):
    return json.loads(Path(path).read_text())
