from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..graph import GraphFormatError

DEFAULT_DIMS = (32, 64, 128)


class EmbeddingError(RuntimeError):
    """An embedding fit failed (divergence, solver failure, bad input)."""


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    values: np.ndarray
    method_id: str
    hyperparams: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError(f"embedding must be a 2-D matrix with d >= 1, got shape {v.shape}")
        bad = ~np.isfinite(v)
        if bad.any():
            raise EmbeddingError(f"{self.method_id}: non-finite value in row {int(np.argwhere(bad)[0, 0])}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def metadata(self) -> dict:
        return {
            "method_id": self.method_id,
            "dimension": self.dimension,
            "n": self.n,
            "hyperparams": self.hyperparams,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values per hyperparameter; enumeration order is axis order, last axis fastest."""

    method_id: str
    axes: dict = field(default_factory=dict)

    def points(self):
        import itertools

        names = list(self.axes)
        for combo in itertools.product(*(self.axes[k] for k in names)):
            yield dict(zip(names, combo))

    def __len__(self):
        size = 1
        for vals in self.axes.values():
            size *= len(vals)
        return size


def save_embedding(emb: EmbeddingMatrix, path, metadata=True):
    """Text matrix (`n d` header, then rows) plus a JSON sidecar `<path>.json`."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{emb.n} {emb.dimension}\n")
        np.savetxt(fh, emb.values, fmt="%.17g")
    if metadata:
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(emb.metadata(), fh, indent=2, sort_keys=True)


def load_embedding(path, expected_n=None, method_id=None) -> EmbeddingMatrix:
    """Read the text format written by `save_embedding` or produced by an external tool."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise GraphFormatError(f"{path}: header must be 'n d'")
        n, d = int(header[0]), int(header[1])
        if expected_n is not None and n != expected_n:
            raise GraphFormatError(f"{path}: embedding has {n} rows, graph has {expected_n} nodes")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = [float(t) for t in line.split()]
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric value") from None
            if len(row) != d:
                raise GraphFormatError(f"{path}:{lineno}: expected {d} values, got {len(row)}")
            if not all(np.isfinite(row)):
                raise GraphFormatError(f"{path}: non-finite value in row {len(rows)}")
            rows.append(row)
    if len(rows) != n:
        raise GraphFormatError(f"{path}: row count mismatch (header says {n}, found {len(rows)})")
    meta = {}
    side = Path(str(path) + ".json")
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    mid = method_id or meta.get("method_id") or f"external:{path.name}"
    return EmbeddingMatrix(np.array(rows, dtype=np.float64).reshape(n, d), mid,
                           meta.get("hyperparams", {}), meta.get("seed"))
