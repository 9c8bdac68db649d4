"""Experiment orchestration: specs, seed management, records, file emission.

An ExperimentSpec names an experiment kind (see :mod:`stepstone.experiments`),
its parameters, a replica count and a master seed.  `run` dispatches to the
registered kind and wraps the result in a ResultRecord; emitted files carry
the spec hash and master seed in their header so any output can be traced to
the exact configuration that produced it.

Configuration files are plain text, one `key = value` per line, `#` comments.
Values parse as int, float, bool, or a comma-separated list thereof; anything
else stays a string.  CLI flags override file values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import substream

__all__ = [
    "ExperimentSpec",
    "ResultRecord",
    "parse_config",
    "parse_value",
    "spec_hash",
    "register_experiment",
    "experiment_kinds",
    "run",
    "run_replicas",
    "aggregate",
    "write_csv",
    "write_json",
]

_REGISTRY = {}


def register_experiment(kind):
    """Decorator: register fn(params: dict, master_seed, out_dir) -> report."""

    def wrap(fn):
        _REGISTRY[kind] = fn
        return fn

    return wrap


def experiment_kinds():
    return sorted(_REGISTRY)


@dataclass
class ExperimentSpec:
    kind: str
    params: dict = field(default_factory=dict)
    reps: int = 1
    master_seed: int = 0
    out: str = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.kind not in _REGISTRY:
            raise ValueError(
                f"unknown experiment kind {self.kind!r}; known: {experiment_kinds()}"
            )


@dataclass
class ResultRecord:
    kind: str
    estimates: dict
    passed: bool
    reps: int
    master_seed: int
    spec_hash: str
    wall_time_s: float
    version: str = __version__

    def to_json(self):
        return json.dumps(asdict(self), indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x)}")


def parse_value(text):
    text = text.strip()
    if "," in text:
        return [parse_value(t) for t in text.split(",") if t.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(path):
    """Read a key = value config file into a dict."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (need key = value): {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = parse_value(val)
    return out


def spec_hash(spec):
    """Stable hash of (kind, params, reps, master_seed)."""
    canon = json.dumps(
        {
            "kind": spec.kind,
            "params": spec.params,
            "reps": spec.reps,
            "master_seed": spec.master_seed,
        },
        sort_keys=True,
        default=_jsonable,
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def run(spec):
    """Execute a spec; returns (ResultRecord, report dict).

    Deterministic given (spec, master_seed): all randomness derives from the
    master seed through named substreams.  Writes <out>/<kind>.json and any
    experiment-specific files when spec.out is set.
    """
    fn = _REGISTRY[spec.kind]
    t0 = time.perf_counter()
    out_dir = None
    if spec.out is not None:
        out_dir = Path(spec.out)
        out_dir.mkdir(parents=True, exist_ok=True)
    report = fn(dict(spec.params), spec.master_seed, out_dir)
    wall = time.perf_counter() - t0
    record = ResultRecord(
        kind=spec.kind,
        estimates=report,
        passed=bool(report.get("pass", True)),
        reps=spec.reps,
        master_seed=spec.master_seed,
        spec_hash=spec_hash(spec),
        wall_time_s=wall,
    )
    if out_dir is not None:
        (out_dir / f"{spec.kind}.json").write_text(record.to_json())
    return record, report


def _replica_chunk(args):
    fn, master_seed, stream, idxs, params = args
    return [fn(substream(master_seed, stream, i), i, params) for i in idxs]


def run_replicas(fn, reps, master_seed, params=None, workers=1, stream=7):
    """Map fn(rng, replica_index, params) over replicas, deterministically.

    Per-replica generators come from named substreams of the master seed, so
    results are identical for any worker count; outputs are returned in
    replica order.
    """
    params = params or {}
    if workers <= 1:
        return [
            fn(substream(master_seed, stream, i), i, params) for i in range(reps)
        ]
    chunks = [list(range(reps))[k::workers] for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(
                _replica_chunk,
                [(fn, master_seed, stream, idxs, params) for idxs in chunks],
            )
        )
    out = [None] * reps
    for idxs, vals in zip(chunks, parts):
        for i, v in zip(idxs, vals):
            out[i] = v
    return out


def aggregate(records):
    """Pool estimates of same-kind records: mean of means, pooled SE."""
    if not records:
        raise ValueError("no records to aggregate")
    kinds = {r.kind for r in records}
    if len(kinds) != 1:
        raise ValueError(f"heterogeneous kinds: {sorted(kinds)}")
    keys = [
        k
        for k, v in records[0].estimates.items()
        if isinstance(v, (int, float)) and not isinstance(v, bool)
    ]
    table = {"kind": records[0].kind, "n_records": len(records)}
    for k in keys:
        vals = np.array([r.estimates[k] for r in records], dtype=float)
        table[k] = vals.mean()
        if len(vals) > 1:
            table[k + "_se"] = vals.std(ddof=1) / np.sqrt(len(vals))
    return table


def _header_lines(meta):
    return [f"# {k} = {v}" for k, v in meta.items()]


def write_csv(path, rows, columns, meta=None):
    """CSV with `# key = value` header lines carrying provenance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in _header_lines(meta or {}):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def write_json(path, payload, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(meta or {})
    body.update(payload)
    path.write_text(json.dumps(body, indent=2, default=_jsonable))
    return path
