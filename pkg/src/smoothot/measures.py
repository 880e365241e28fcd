"""Empirical measures on R^d, polynomial moments, and benchmark sampling laws."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InputError
from .rng import RngSpec

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud in R^d.

    points:  (N, d) float array, N >= 1.
    weights: (N,) nonnegative floats summing to 1 (abs tol 1e-12).
    dim:     d.

    Immutable after construction; the arrays are marked read-only so
    instances can be shared freely across threads.
    """

    points: np.ndarray
    weights: np.ndarray
    dim: int

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InputError(f"points must be a nonempty (N, d) array, got shape {pts.shape}")
        if pts.shape[1] != self.dim:
            raise InputError(f"points have dimension {pts.shape[1]}, expected dim={self.dim}")
        if self.dim < 1:
            raise InputError("dim must be a positive integer")
        if w.shape != (pts.shape[0],):
            raise InputError(f"weights shape {w.shape} does not match N={pts.shape[0]}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InputError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
            raise InputError(f"weights must sum to 1 within {WEIGHT_TOL}, got {w.sum()!r}")
        if not np.all(np.isfinite(pts)):
            raise InputError("points must be finite")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def norms(self) -> np.ndarray:
        if self.dim == 1:
            return np.abs(self.points[:, 0])
        return np.linalg.norm(self.points, axis=1)


@dataclass(frozen=True)
class MomentOrder:
    """Order r of the polynomial moment integral(1 + |x|^r)."""

    q: float

    def __post_init__(self):
        if not (self.q > 0):
            raise InputError(f"moment order must be > 0, got {self.q}")


@dataclass(frozen=True)
class LawSpec:
    """Benchmark sampling law on R^d.

    Families:
      gaussian:      isotropic normal, mean vector ``mean`` and covariance var * I_d.
      uniform-ball:  uniform on the centered ball of the given radius.
      pareto-radial: X = R * U with R Pareto(tail index alpha, scale) on
                     [scale, inf) and U uniform on the unit sphere.  The r-th
                     absolute moment is finite iff r < alpha, which makes alpha
                     the knob for the available moment order.

    ``shift`` translates any family by a constant vector (default none).
    """

    family: str
    dim: int
    mean: Optional[np.ndarray] = None
    var: Optional[float] = None
    radius: Optional[float] = None
    alpha: Optional[float] = None
    scale: Optional[float] = None
    shift: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("dim must be a positive integer")
        if self.family == "gaussian":
            if self.mean is None or self.var is None:
                raise InputError("gaussian law needs mean and var")
            mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
            if mean.shape != (self.dim,):
                raise InputError(f"gaussian mean has shape {mean.shape}, expected ({self.dim},)")
            if not (self.var > 0):
                raise InputError("gaussian var must be > 0")
            mean.setflags(write=False)
            object.__setattr__(self, "mean", mean)
        elif self.family == "uniform-ball":
            if self.radius is None or not (self.radius > 0):
                raise InputError("uniform-ball radius must be > 0")
        elif self.family == "pareto-radial":
            if self.alpha is None or not (self.alpha > 0):
                raise InputError("pareto-radial tail index alpha must be > 0")
            scale = 1.0 if self.scale is None else float(self.scale)
            if not (scale > 0):
                raise InputError("pareto-radial scale must be > 0")
            object.__setattr__(self, "scale", scale)
        else:
            raise InputError(f"unknown law family {self.family!r}")
        if self.shift is not None:
            shift = np.asarray(self.shift, dtype=np.float64).reshape(-1)
            if shift.shape != (self.dim,):
                raise InputError(f"shift has shape {shift.shape}, expected ({self.dim},)")
            shift.setflags(write=False)
            object.__setattr__(self, "shift", shift)

    @classmethod
    def gaussian(cls, mean, var: float, dim: Optional[int] = None) -> "LawSpec":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        return cls(family="gaussian", dim=dim or mean.size, mean=mean, var=float(var))

    @classmethod
    def uniform_ball(cls, radius: float, dim: int) -> "LawSpec":
        return cls(family="uniform-ball", dim=dim, radius=float(radius))

    @classmethod
    def pareto_radial(cls, alpha: float, dim: int, scale: float = 1.0, shift=None) -> "LawSpec":
        return cls(family="pareto-radial", dim=dim, alpha=float(alpha),
                   scale=float(scale), shift=shift)

    def to_dict(self) -> dict:
        out = {"family": self.family, "dim": self.dim}
        if self.mean is not None:
            out["mean"] = [float(v) for v in self.mean]
        for key in ("var", "radius", "alpha", "scale"):
            v = getattr(self, key)
            if v is not None:
                out[key] = float(v)
        if self.shift is not None:
            out["shift"] = [float(v) for v in self.shift]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LawSpec":
        return cls(family=d["family"], dim=int(d["dim"]),
                   mean=d.get("mean"), var=d.get("var"), radius=d.get("radius"),
                   alpha=d.get("alpha"), scale=d.get("scale"), shift=d.get("shift"))


def moment(mu: EmpiricalMeasure, r: Union[MomentOrder, float]) -> float:
    """Polynomial moment sum_i w_i (1 + |x_i|^r); always >= 1."""
    q = r.q if isinstance(r, MomentOrder) else float(r)
    if not (q > 0):
        raise InputError(f"moment order must be > 0, got {q}")
    return float(np.dot(mu.weights, 1.0 + mu.norms() ** q))


def _unit_sphere(g: np.random.Generator, n: int, d: int) -> np.ndarray:
    if d == 1:
        return (2.0 * g.integers(0, 2, size=(n, 1)) - 1.0).astype(np.float64)
    u = g.standard_normal((n, d))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    # zero-norm draws have probability zero; guard against them anyway
    norms[norms == 0.0] = 1.0
    return u / norms


def sample(law: LawSpec, n: int, rng: RngSpec) -> EmpiricalMeasure:
    """n equal-weight i.i.d. draws from the law; deterministic given rng.

    Draw order is fixed per family (radii before directions) so the output
    is bit-reproducible across runs and thread counts.
    """
    if n < 1:
        raise InputError(f"sample size must be >= 1, got {n}")
    g = rng.generator()
    d = law.dim
    if law.family == "gaussian":
        pts = law.mean[None, :] + np.sqrt(law.var) * g.standard_normal((n, d))
    elif law.family == "uniform-ball":
        radii = law.radius * g.random(n) ** (1.0 / d)
        pts = radii[:, None] * _unit_sphere(g, n, d)
    elif law.family == "pareto-radial":
        # survival P(R > r) = (scale / r)^alpha on [scale, inf)
        radii = law.scale * (1.0 - g.random(n)) ** (-1.0 / law.alpha)
        pts = radii[:, None] * _unit_sphere(g, n, d)
    else:  # pragma: no cover - guarded in LawSpec
        raise InputError(f"unknown law family {law.family!r}")
    if law.shift is not None:
        pts = pts + law.shift[None, :]
    return EmpiricalMeasure(points=pts, weights=np.full(n, 1.0 / n), dim=d)


def empirical_from_rows(rows: Sequence[Sequence[float]],
                        weights: Optional[Sequence[float]] = None) -> EmpiricalMeasure:
    """Build a measure from raw rows; weights normalized to 1, default uniform."""
    if len(rows) == 0:
        raise InputError("empty point list")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise InputError(f"inconsistent point dimensions {sorted(dims)}")
    d = dims.pop()
    if d < 1:
        raise InputError("points must have dimension >= 1")
    pts = np.asarray(rows, dtype=np.float64)
    n = pts.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise InputError(f"{len(weights)} weights for {n} points")
        if np.any(w < 0):
            raise InputError("negative weight")
        total = float(w.sum())
        if not (total > 0):
            raise InputError("weights sum to zero")
        w = w / total
    return EmpiricalMeasure(points=pts, weights=w, dim=d)


def read_points_csv(path: Union[str, Path]) -> EmpiricalMeasure:
    """Read a point cloud from CSV: one point per row, d numeric columns.

    Lines starting with '#' are comments.  An optional header row may name
    the columns; a trailing column named 'weight' (case-insensitive) is read
    as the point weight.  UTF-8, '.' decimal separator.
    """
    path = Path(path)
    rows: list[list[float]] = []
    weights: list[float] = []
    weight_col: Optional[int] = None
    header_seen = False
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path} is not valid UTF-8: {exc}") from exc

    for lineno, record in enumerate(csv.reader(text.splitlines()), start=1):
        if not record or (len(record) == 1 and not record[0].strip()):
            continue
        if record[0].lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in record]
        if not header_seen and not rows:
            try:
                [float(f) for f in fields]
            except ValueError:
                header_seen = True
                if fields and fields[-1].lower() == "weight":
                    weight_col = len(fields) - 1
                continue
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: malformed row {record!r}: {exc}") from exc
        if weight_col is not None:
            if len(values) != weight_col + 1:
                raise InputError(f"{path}:{lineno}: expected {weight_col + 1} columns, got {len(values)}")
            weights.append(values[weight_col])
            values = values[:weight_col]
        if rows and len(values) != len(rows[0]):
            raise InputError(f"{path}:{lineno}: expected {len(rows[0])} coordinates, got {len(values)}")
        rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    try:
        return empirical_from_rows(rows, weights if weight_col is not None else None)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc
