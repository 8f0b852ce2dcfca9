"""Run experiments to CSV files plus a checksummed manifest, and re-check them."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..exceptions import UsageError, WarmstartHMCError
from .config import ExperimentConfig
from .experiments import ArmResult, Criterion, evaluate, expand_arms, run_arm

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CRITERIA_FILE = "criteria.csv"
CRITERIA_COLUMNS = ("criterion", "instance", "statistic", "value", "bound", "passed")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def run_experiment(cfg: ExperimentConfig) -> tuple[list[ArmResult], list[Criterion]]:
    """Run every arm (in ``cfg.workers`` processes) and evaluate the criteria."""
    arms = expand_arms(cfg)
    if not arms:
        raise UsageError(f"experiment {cfg.experiment} expands to no arms")
    if cfg.workers > 1 and len(arms) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_arm, cfg.experiment, name, kw) for name, kw in arms]
            results = [f.result() for f in futures]
    else:
        results = [run_arm(cfg.experiment, name, kw) for name, kw in arms]
    return results, evaluate(cfg, results)


def write_outputs(cfg: ExperimentConfig, results, criteria, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for res in results:
        name = f"{cfg.experiment}_{res.name}.csv"
        data = csv_text(res.columns, res.rows).encode()
        (out / name).write_bytes(data)
        files[name] = sha256(data)
    data = csv_text(CRITERIA_COLUMNS, [c.as_row() for c in criteria]).encode()
    (out / CRITERIA_FILE).write_bytes(data)
    files[CRITERIA_FILE] = sha256(data)
    manifest = {
        "experiment": cfg.experiment,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": _jsonable(cfg.to_entries()),
        "config_text": cfg.serialize(),
        "seeds": list(cfg.seeds),
        "seed_offset": cfg.seed_offset,
        "arms": {r.name: {"metrics": _jsonable(r.metrics), "seconds": r.seconds} for r in results},
        "criteria": [_jsonable(c.as_row()) for c in criteria],
        "files": files,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def format_table(criteria_rows) -> str:
    lines = []
    for c in criteria_rows:
        status = "PASS" if c["passed"] in (True, "true") else "FAIL"
        value = c["value"]
        value = f"{value:.6g}" if isinstance(value, float) else str(value)
        lines.append(f"{status}  {c['criterion']:<28} {c['instance']:<40} {c['statistic']} = {value} ({c['bound']})")
    return "\n".join(lines)


def run(config_path, *, workers: int | None = None, seed_offset: int | None = None, out: str | None = None,
        environ=None, stream=None) -> int:
    """Execute a configured experiment.  Returns the process exit status."""
    stream = stream if stream is not None else _stdout()
    try:
        cfg = ExperimentConfig.from_file(config_path, environ)
        if workers is not None:
            if workers < 1:
                raise UsageError("--workers must be positive")
            cfg.workers = workers
        if seed_offset is not None:
            if seed_offset < 0:
                raise UsageError("--seed-offset must be non-negative")
            cfg.seed_offset = seed_offset
        if out is not None:
            cfg.output = out
        results, criteria = run_experiment(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=stream)
        return EXIT_USAGE
    except WarmstartHMCError as exc:
        print(f"error: {exc}", file=stream)
        return EXIT_FAIL
    out_dir = write_outputs(cfg, results, criteria, cfg.output)
    print(format_table([c.as_row() for c in criteria]), file=stream)
    failed = [c for c in criteria if not c.passed]
    print(f"{len(criteria) - len(failed)}/{len(criteria)} criteria passed; outputs in {out_dir}", file=stream)
    return EXIT_FAIL if failed else EXIT_OK


def report(directory, stream=None) -> int:
    """Verify checksums and reprint the criteria of a finished run."""
    stream = stream if stream is not None else _stdout()
    path = Path(directory) / MANIFEST
    if not path.is_file():
        print(f"usage error: no {MANIFEST} in {directory}", file=stream)
        return EXIT_USAGE
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        print(f"usage error: unreadable manifest: {exc}", file=stream)
        return EXIT_USAGE
    status = EXIT_OK
    for name, digest in sorted(manifest.get("files", {}).items()):
        target = Path(directory) / name
        if not target.is_file():
            print(f"MISSING    {name}", file=stream)
            status = EXIT_FAIL
        elif sha256(target.read_bytes()) != digest:
            print(f"MISMATCH   {name}", file=stream)
            status = EXIT_FAIL
    criteria = manifest.get("criteria", [])
    print(format_table(criteria), file=stream)
    if any(c["passed"] is not True for c in criteria):
        status = EXIT_FAIL
    print(f"experiment {manifest.get('experiment')} (version {manifest.get('version')}): "
          f"{'ok' if status == EXIT_OK else 'FAILED'}", file=stream)
    return status


def _stdout():
    return sys.stdout
