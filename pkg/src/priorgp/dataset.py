"""Trajectory data model, CSV/manifest ingestion and synthetic generators.

Trajectory files are UTF-8 CSV with header ``trajectory_id,x,y``; one file
may hold many trajectories. A JSON manifest names the files and carries
axis metadata, normalization, an optional axis flip, the Paris-law
configuration and the train/evaluation split::

    {
      "name": "virkler",
      "files": ["virkler.csv"],
      "x": {"role": "cycles", "unit": "cycles"},
      "y": {"role": "crack length", "unit": "mm"},
      "flip_axes": true,
      "normalization": {"x_divide": 1.0, "y_divide": 1.0},
      "paris": {"width": 152.4, "stress_range": 48.26, "a0": 9.0,
                "C": 8.7096e-11, "alphas": [2.9]},
      "split": {"inference": ["1", "2"], "evaluation": ["48"]}
    }

Normalization refers to the file columns and is applied before the flip.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from priorgp.basis import BasisSet, ParisLawConfig
from priorgp.errors import InvalidSpecError, ParseError, SchemaError
from priorgp.gp import GpModel, cholesky_with_jitter, gram

CSV_HEADER = ("trajectory_id", "x", "y")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One realization of a degradation process, ordered by ``xs``."""

    id: str
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.array(self.xs, dtype=float).ravel()
        ys = np.array(self.ys, dtype=float).ravel()
        if xs.size == 0 or xs.shape != ys.shape:
            raise SchemaError(f"trajectory {self.id!r}: need equal-length non-empty x and y")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise SchemaError(f"trajectory {self.id!r}: non-finite value")
        if np.any(np.diff(xs) <= 0):
            raise SchemaError(f"trajectory {self.id!r}: x must be strictly increasing")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self) -> int:
        return self.xs.size

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.xs, other.xs) and np.array_equal(self.ys, other.ys)

    def __hash__(self):
        return hash((self.id, self.xs.tobytes(), self.ys.tobytes()))

    def prefix(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.xs[:i], self.ys[:i]


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def format_float(v: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(v))


def read_trajectories(path) -> list[Trajectory]:
    """Parse a ``trajectory_id,x,y`` CSV file."""
    return parse_trajectories(Path(path).read_text(encoding="utf-8"))


def parse_trajectories(text: str) -> list[Trajectory]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError("empty trajectory file")
    header = tuple(h.strip() for h in rows[0])
    missing = [c for c in CSV_HEADER if c not in header]
    if missing:
        raise SchemaError(f"missing column(s) {missing}; expected header {','.join(CSV_HEADER)}")
    idx = [header.index(c) for c in CSV_HEADER]
    groups: dict[str, tuple[list, list, list]] = {}
    for rowno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            tid, xs, ys = (row[i].strip() for i in idx)
            x, y = float(xs), float(ys)
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed row {row!r}: {exc}", rowno) from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError(f"non-finite value in row {row!r}", rowno)
        g = groups.setdefault(tid, ([], [], []))
        g[0].append(x)
        g[1].append(y)
        g[2].append(rowno)
    if not groups:
        raise SchemaError("trajectory file has a header but no rows")
    return [_checked(tid, *g) for tid, g in groups.items()]


def _checked(tid: str, xs: list, ys: list, rownos: list) -> Trajectory:
    for k in range(1, len(xs)):
        if not xs[k] > xs[k - 1]:
            raise ParseError(f"trajectory {tid!r}: x not strictly increasing", rownos[k])
    return Trajectory(tid, np.array(xs), np.array(ys))


def format_trajectories(trajectories) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for t in trajectories:
        for x, y in zip(t.xs, t.ys):
            w.writerow((t.id, format_float(x), format_float(y)))
    return buf.getvalue()


def write_trajectories(path, trajectories) -> None:
    Path(path).write_text(format_trajectories(trajectories), encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    files: tuple[str, ...]
    x_role: str = "x"
    x_unit: str = ""
    y_role: str = "y"
    y_unit: str = ""
    flip_axes: bool = False
    x_divide: float = 1.0
    y_divide: float = 1.0
    paris: ParisLawConfig | None = None
    inference_ids: tuple[str, ...] | None = None
    evaluation_ids: tuple[str, ...] | None = None
    base_dir: Path = field(default=Path("."), compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> DatasetManifest:
        if "files" not in d or not d["files"]:
            raise SchemaError("manifest needs a non-empty 'files' list")
        norm = d.get("normalization", {}) or {}
        split = d.get("split", {}) or {}
        x, y = d.get("x", {}) or {}, d.get("y", {}) or {}
        return cls(
            name=str(d.get("name", "dataset")),
            files=tuple(str(f) for f in d["files"]),
            x_role=str(x.get("role", "x")),
            x_unit=str(x.get("unit", "")),
            y_role=str(y.get("role", "y")),
            y_unit=str(y.get("unit", "")),
            flip_axes=bool(d.get("flip_axes", False)),
            x_divide=float(norm.get("x_divide", 1.0)),
            y_divide=float(norm.get("y_divide", 1.0)),
            paris=ParisLawConfig.from_dict(d["paris"]) if d.get("paris") else None,
            inference_ids=tuple(str(s) for s in split["inference"]) if split.get("inference") else None,
            evaluation_ids=tuple(str(s) for s in split["evaluation"]) if split.get("evaluation") else None,
            base_dir=Path(base_dir),
        )

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "files": list(self.files),
            "x": {"role": self.x_role, "unit": self.x_unit},
            "y": {"role": self.y_role, "unit": self.y_unit},
            "flip_axes": self.flip_axes,
            "normalization": {"x_divide": self.x_divide, "y_divide": self.y_divide},
        }
        if self.paris is not None:
            d["paris"] = self.paris.to_dict()
        split = {}
        if self.inference_ids is not None:
            split["inference"] = list(self.inference_ids)
        if self.evaluation_ids is not None:
            split["evaluation"] = list(self.evaluation_ids)
        if split:
            d["split"] = split
        return d


@dataclass(frozen=True, eq=False)
class Dataset:
    manifest: DatasetManifest
    trajectories: tuple[Trajectory, ...]

    def __len__(self) -> int:
        return len(self.trajectories)

    def by_id(self, tid: str) -> Trajectory:
        for t in self.trajectories:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def inference_set(self) -> list[Trajectory]:
        ids = self.manifest.inference_ids
        return list(self.trajectories) if ids is None else [self.by_id(i) for i in ids]

    def evaluation_set(self) -> list[Trajectory]:
        m = self.manifest
        if m.evaluation_ids is not None:
            return [self.by_id(i) for i in m.evaluation_ids]
        if m.inference_ids is not None:
            inf = set(m.inference_ids)
            return [t for t in self.trajectories if t.id not in inf]
        return list(self.trajectories)

    def echo(self) -> dict:
        """Manifest plus a record of the transformations applied on load."""
        d = self.manifest.to_dict()
        d["applied"] = {
            "x_divide": self.manifest.x_divide,
            "y_divide": self.manifest.y_divide,
            "flip_axes": self.manifest.flip_axes,
            "n_trajectories": len(self.trajectories),
        }
        return d


def load(manifest_path) -> Dataset:
    """Read a manifest and all its trajectory files.

    Normalization divides the file columns; the axis flip is applied last.
    """
    path = Path(manifest_path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from None
    manifest = DatasetManifest.from_dict(raw, base_dir=path.parent)
    out: list[Trajectory] = []
    for name in manifest.files:
        for t in read_trajectories(manifest.base_dir / name):
            xs, ys = t.xs / manifest.x_divide, t.ys / manifest.y_divide
            if manifest.flip_axes:
                xs, ys = ys, xs
                if np.any(np.diff(xs) <= 0):
                    raise ParseError(f"trajectory {t.id!r}: flipped x not strictly increasing")
            out.append(Trajectory(t.id, xs, ys))
    ids = [t.id for t in out]
    if len(set(ids)) != len(ids):
        raise SchemaError("duplicate trajectory ids across files")
    for split_ids in (manifest.inference_ids, manifest.evaluation_ids):
        for i in split_ids or ():
            if i not in ids:
                raise SchemaError(f"split references unknown trajectory {i!r}")
    return Dataset(manifest, tuple(out))


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Coefficient-space generator: ``y = Phi(x) beta_j + eps``."""

    basis: BasisSet
    mean: np.ndarray
    cov: np.ndarray
    grid: np.ndarray
    count: int
    noise: float = 0.0
    seed: int = 0


def _check_psd(cov: np.ndarray) -> None:
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise InvalidSpecError("coefficient covariance must be square and symmetric")
    ev = np.linalg.eigvalsh(cov)
    if ev.size and ev.min() < -1e-10 * max(1.0, abs(ev).max()):
        raise InvalidSpecError(f"coefficient covariance not PSD (min eigenvalue {ev.min():.3g})")


def synthesize(spec: GeneratorSpec) -> list[Trajectory]:
    """Draw ``count`` trajectories; deterministic per seed."""
    mean = np.asarray(spec.mean, float)
    cov = np.atleast_2d(np.asarray(spec.cov, float))
    if mean.size != spec.basis.size or cov.shape != (mean.size, mean.size):
        raise InvalidSpecError("mean/cov dimensions do not match the basis")
    _check_psd(cov)
    if spec.noise < 0 or spec.count < 1:
        raise InvalidSpecError("noise must be >= 0 and count >= 1")
    rng = np.random.default_rng(spec.seed)
    grid = np.asarray(spec.grid, float)
    phi = spec.basis.design(grid)
    betas = rng.multivariate_normal(mean, cov, size=spec.count, method="eigh")
    eps = rng.standard_normal((spec.count, grid.size)) * spec.noise
    ys = betas @ phi.T + eps
    return [Trajectory(str(j + 1), grid, ys[j]) for j in range(spec.count)]


def synthesize_gp(model: GpModel, grid, count: int, seed: int = 0) -> list[Trajectory]:
    """Draw noisy trajectories from a GP prior on a shared grid."""
    grid = np.asarray(grid, float)
    st = model.standardizer
    mean = st.y_back(model.mean(st.x(grid)))
    chol, _ = cholesky_with_jitter(gram(grid, model))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, grid.size))
    ys = mean + z @ chol.T
    return [Trajectory(str(j + 1), grid, ys[j]) for j in range(count)]
