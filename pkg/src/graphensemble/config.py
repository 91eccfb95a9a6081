"""
Run configuration (a single JSON file) and dataset preparation.

Keys
----
dataset      {"edges": path, "labels": path, "directed": false}
synthetic    {"graphs": [{"kind", "n", "params", "seed"}...], "pair_fraction": 0.4,
              "accept_prob": 0.3, "labels": "degree" | "closeness", "bins": 8}
methods      {"gf": {"grid": {...}, "params": {...}}, "lap": {}, ...,
              "<name>": {"external": {"32": path, ...}}}
dims         [32, 64, 128]
fractions    [0.5, 0.2, 0.3]
rounds       5
seed         0
out          output directory
classifier   {"reg": 1.0, "threshold": null}
diversity    {"dim": 128, "rv": false}

Exactly one of `dataset` / `synthetic` is required. A method without "grid"
uses the default grid of that method; "grid": {} fixes the parameters.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synthgen
from .embed import DEFAULT_DIMS, DEFAULT_GRIDS, METHODS, HyperGrid
from .ensemble import FRACTIONS, ClassifierConfig, MethodSpec, derive_seed
from .graph import load_edge_list, load_labels, largest_wcc

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    methods: dict
    dataset: dict | None = None
    synthetic: dict | None = None
    dims: list = field(default_factory=lambda: list(DEFAULT_DIMS))
    fractions: list = field(default_factory=lambda: list(FRACTIONS))
    rounds: int = 5
    seed: int = 0
    out: str = "results"
    classifier: dict = field(default_factory=dict)
    diversity: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, d, base_dir=None):
        known = {"methods", "dataset", "synthetic", "dims", "fractions", "rounds", "seed", "out",
                 "classifier", "diversity"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "methods" not in d:
            raise ConfigError("config needs a 'methods' section")
        cfg = cls(**{k: v for k, v in d.items()}, base_dir=Path(base_dir or Path.cwd()))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d, path.parent)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self):
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("exactly one of 'dataset' and 'synthetic' must be given")
        if not self.methods:
            raise ConfigError("no methods configured")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must be three numbers summing to 1, got {self.fractions}")
        if int(self.rounds) < 1:
            raise ConfigError("rounds must be >= 1")
        if not self.dims:
            raise ConfigError("dims must be non-empty")
        for name, m in self.methods.items():
            m = m or {}
            if "external" in m:
                for dim, f in m["external"].items():
                    if not self.resolve(f).exists():
                        raise ConfigError(f"method {name}: external file for d={dim} not found: {f}")
            elif name not in METHODS:
                raise ConfigError(f"unknown method {name!r}; expected one of {METHODS} or an 'external' entry")
        if self.dataset is not None:
            for key in ("edges", "labels"):
                if key not in self.dataset:
                    raise ConfigError(f"dataset needs '{key}'")
                if not self.resolve(self.dataset[key]).exists():
                    raise ConfigError(f"dataset {key} file not found: {self.dataset[key]}")

    def to_dict(self):
        return {
            "methods": self.methods, "dataset": self.dataset, "synthetic": self.synthetic,
            "dims": self.dims, "fractions": self.fractions, "rounds": self.rounds, "seed": self.seed,
            "classifier": self.classifier, "diversity": self.diversity,
        }

    def method_specs(self):
        specs = []
        for name, m in self.methods.items():
            m = m or {}
            if "external" in m:
                specs.append(MethodSpec(name, HyperGrid(name, {}), {}))
                continue
            grid = m.get("grid", DEFAULT_GRIDS[name])
            specs.append(MethodSpec(name, HyperGrid(name, {k: list(v) for k, v in grid.items()}),
                                    dict(m.get("params", {}))))
        return specs

    def external_files(self):
        return {name: {str(k): str(self.resolve(v)) for k, v in m["external"].items()}
                for name, m in self.methods.items() if m and "external" in m}

    def classifier_config(self):
        return ClassifierConfig(float(self.classifier.get("reg", 1.0)), self.classifier.get("threshold"))

    def out_dir(self) -> Path:
        return self.resolve(self.out)


def synthetic_specs(syn: dict, seed: int):
    graphs = syn.get("graphs")
    if not graphs:
        return synthgen.default_specs(100, seed)
    return [synthgen.SynthSpec(g["kind"], int(g.get("n", 100)), dict(g.get("params", {})),
                               int(g.get("seed", seed + i))) for i, g in enumerate(graphs)]


def build_synthetic(syn: dict, seed: int):
    """Generated (and merged) graph restricted to its largest WCC, with degree and closeness labels."""
    parts = [synthgen.generate(s) for s in synthetic_specs(syn, seed)]
    if len(parts) == 1:
        g = parts[0]
    else:
        g = synthgen.merge_with_random_edges(parts, float(syn.get("pair_fraction", 0.4)),
                                             float(syn.get("accept_prob", 0.3)), derive_seed(seed, "merge"))
    g, _ = largest_wcc(g)
    bins = int(syn.get("bins", 8))
    return g, {"degree": synthgen.degree_labels(g, bins), "closeness": synthgen.closeness_labels(g, bins)}


def load_dataset(cfg: RunConfig):
    """(graph, labels) for the configured dataset, restricted to the largest WCC."""
    if cfg.synthetic is not None:
        g, labels = build_synthetic(cfg.synthetic, int(cfg.seed))
        which = cfg.synthetic.get("labels", "degree")
        if which not in labels:
            raise ConfigError(f"synthetic labels must be 'degree' or 'closeness', got {which!r}")
        return g, labels[which]
    ds = cfg.dataset
    g, node_map = load_edge_list(cfg.resolve(ds["edges"]), bool(ds.get("directed", False)))
    labels = load_labels(cfg.resolve(ds["labels"]), node_map, g.node_count)
    n_before, e_before = g.node_count, g.edge_count
    g, old = largest_wcc(g)
    labels = labels.subset(old)
    logger.info("dataset: %d nodes / %d edges, largest WCC %d / %d, %d classes",
                n_before, e_before, g.node_count, g.edge_count, labels.label_count)
    if np.all(labels.assignment.sum(axis=1) == 0):
        raise ConfigError("no labelled node in the largest WCC")
    return g, labels
