"""Flat ``key = value`` experiment configuration with dotted sections.

Example::

    experiment = figure1
    dimensions = 10000
    seeds = 0
    figure1.proposals = 100

Values are parsed as int, float, bool, comma-separated list or string.
Any key can be overridden through an environment variable named
``WARMSTART_HMC_`` followed by the upper-cased key with dots replaced by
double underscores, e.g. ``WARMSTART_HMC_FIGURE1__PROPOSALS=50``.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

from ..exceptions import UsageError

ENV_PREFIX = "WARMSTART_HMC_"
_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*(\.[A-Za-z_][A-Za-z0-9_\-]*)*$")
_INT = re.compile(r"^[+-]?\d+$")

EXPERIMENTS = (
    "figure1",
    "unadjusted-escape",
    "warmstart-scaling",
    "strong-error",
    "contraction",
    "chaos",
    "aux-recursion",
    "mhmc-exactness",
    "two-phase-e2e",
    "proximal-e2e",
    "bias-plateau",
)


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if _INT.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        return text


def format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        # a trailing comma keeps one-element lists lists
        return ", ".join(format_value(v) for v in value) + ("," if len(value) == 1 else "")
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_text(text: str) -> dict:
    """Parse configuration text into an ordered flat dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise UsageError(f"line {lineno}: invalid key {key!r}")
        out[key] = parse_value(value)
    return out


def serialize(entries: dict) -> str:
    return "".join(f"{k} = {format_value(v)}\n" for k, v in entries.items())


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX) and len(name) > len(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = parse_value(value)
    return out


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class ExperimentConfig:
    """Validated experiment configuration.

    ``params`` holds every remaining key (for example ``figure1.proposals``)
    with its parsed value.
    """

    experiment: str
    dimensions: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    output: str = "results"
    workers: int = 1
    seed_offset: int = 0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_entries(cls, entries: dict) -> "ExperimentConfig":
        entries = dict(entries)
        name = entries.pop("experiment", None)
        if name not in EXPERIMENTS:
            raise UsageError(f"unknown or missing experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
        dims = [int(v) for v in _as_list(entries.pop("dimensions", []))]
        seeds = [int(v) for v in _as_list(entries.pop("seeds", 0))]
        if any(d < 1 for d in dims):
            raise UsageError("dimensions must be positive")
        workers = entries.pop("workers", 1)
        seed_offset = entries.pop("seed_offset", 0)
        if not isinstance(workers, int) or workers < 1:
            raise UsageError("workers must be a positive integer")
        if not isinstance(seed_offset, int) or seed_offset < 0:
            raise UsageError("seed_offset must be a non-negative integer")
        return cls(experiment=name, dimensions=dims, seeds=seeds, output=str(entries.pop("output", "results")),
                   workers=workers, seed_offset=seed_offset, params=entries)

    @classmethod
    def from_file(cls, path, environ=None) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        entries = parse_text(text)
        entries.update(env_overrides(environ))
        return cls.from_entries(entries)

    def to_entries(self) -> dict:
        out = {"experiment": self.experiment}
        if self.dimensions:
            out["dimensions"] = list(self.dimensions)
        out["seeds"] = list(self.seeds)
        out["output"] = self.output
        out["workers"] = self.workers
        out["seed_offset"] = self.seed_offset
        out.update(self.params)
        return out

    def serialize(self) -> str:
        return serialize(self.to_entries())

    def get(self, key: str, default=None):
        """Experiment parameter ``<experiment>.<key>`` (or bare ``key``)."""
        scoped = f"{self.experiment}.{key}"
        if scoped in self.params:
            return self.params[scoped]
        return self.params.get(key, default)
