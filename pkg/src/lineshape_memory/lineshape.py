"""Inhomogeneous spectral profiles f(delta) and the frequency grids they live on.

Frequencies are measured in units of the inhomogeneous half width (gamma_i)
unless a lineshape carries a different ``hwhm``.  All named profiles are the
unit-area continuum forms; :func:`normalize` rescales a profile so that the
*quadrature* sum on a given grid is exactly one, which is what the solver and
the susceptibility integrals consume.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator


class InvalidLineshapeError(ValueError):
    """Raised for malformed lineshape definitions (bad nodes, negative widths)."""


class DegenerateLineshapeError(ValueError):
    """Raised when a profile has no weight on the grid it is normalized against."""


class Kind(str, Enum):
    RECTANGULAR = "Rectangular"
    GAUSSIAN = "Gaussian"
    LORENTZIAN = "Lorentzian"
    SPLINE = "Spline"

    @classmethod
    def parse(cls, name: str) -> "Kind":
        for kind in cls:
            if kind.value.lower() == name.strip().lower():
                return kind
        raise InvalidLineshapeError(f"unknown lineshape kind {name!r}")


@dataclass(frozen=True)
class FrequencyGrid:
    """Frequency classes delta_j with per-node quadrature weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size < 2:
            raise ValueError("nodes and weights must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("frequency nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, n: int = 501, span: float = 10.0) -> "FrequencyGrid":
        """``n`` equally spaced classes over [-span, +span], each weighted by the spacing."""
        nodes = np.linspace(-span, span, n)
        nodes = 0.5 * (nodes - nodes[::-1])  # mirror-exact
        step = 2.0 * span / (n - 1)
        return cls(nodes, np.full(n, step))

    @classmethod
    def from_nodes(cls, nodes) -> "FrequencyGrid":
        """Non-uniform grid with trapezoid-style weights (half cells at both ends)."""
        nodes = np.asarray(nodes, dtype=float)
        edges = np.concatenate(([nodes[0]], 0.5 * (nodes[1:] + nodes[:-1]), [nodes[-1]]))
        return cls(nodes, np.diff(edges))

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def span(self) -> float:
        return float(max(-self.nodes[0], self.nodes[-1]))

    def integrate(self, values) -> float | complex:
        return np.sum(np.asarray(values) * self.weights)


@dataclass(frozen=True)
class Lineshape:
    """A named or spline-defined inhomogeneous profile.

    ``scale`` multiplies the evaluated profile; it is 1 for the unit-area named
    forms and is adjusted by :func:`normalize`.
    """

    kind: Kind
    hwhm: float = 1.0
    nodes: tuple[tuple[float, float], ...] | None = None
    scale: float = 1.0
    _interp: PchipInterpolator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        kind = Kind.parse(self.kind) if isinstance(self.kind, str) else self.kind
        object.__setattr__(self, "kind", kind)
        if not self.hwhm > 0 or not math.isfinite(self.hwhm):
            raise InvalidLineshapeError(f"hwhm must be positive, got {self.hwhm}")
        if not self.scale >= 0:
            raise InvalidLineshapeError("scale must be nonnegative")
        if kind is Kind.SPLINE:
            if self.nodes is None:
                raise InvalidLineshapeError("spline lineshape needs nodes")
            pts = np.asarray(self.nodes, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
                raise InvalidLineshapeError("spline nodes must be (delta, value) pairs, at least 2")
            if np.any(np.diff(pts[:, 0]) <= 0):
                raise InvalidLineshapeError("spline node positions must be strictly increasing")
            if np.any(pts[:, 1] < 0) or not np.all(np.isfinite(pts)):
                raise InvalidLineshapeError("spline node values must be finite and nonnegative")
            object.__setattr__(self, "nodes", tuple((float(x), float(y)) for x, y in pts))
            object.__setattr__(self, "_interp", PchipInterpolator(pts[:, 0], pts[:, 1], extrapolate=False))
        elif self.nodes is not None:
            raise InvalidLineshapeError(f"{kind.value} lineshape takes no spline nodes")

    # constructors

    @classmethod
    def rectangular(cls, hwhm: float = 1.0) -> "Lineshape":
        return cls(Kind.RECTANGULAR, hwhm)

    @classmethod
    def gaussian(cls, hwhm: float = 1.0) -> "Lineshape":
        return cls(Kind.GAUSSIAN, hwhm)

    @classmethod
    def lorentzian(cls, hwhm: float = 1.0) -> "Lineshape":
        return cls(Kind.LORENTZIAN, hwhm)

    @classmethod
    def spline(cls, positions, values, hwhm: float = 1.0) -> "Lineshape":
        return cls(Kind.SPLINE, hwhm, tuple(zip(np.asarray(positions, float), np.asarray(values, float))))

    @classmethod
    def named(cls, name: str, hwhm: float = 1.0) -> "Lineshape":
        kind = Kind.parse(name)
        if kind is Kind.SPLINE:
            raise InvalidLineshapeError("a spline lineshape cannot be built from its name alone")
        return cls(kind, hwhm)

    # evaluation

    @property
    def support(self) -> tuple[float, float]:
        """Interval outside which the profile is exactly zero (infinite for Gaussian/Lorentzian)."""
        if self.kind is Kind.RECTANGULAR:
            return (-self.hwhm, self.hwhm)
        if self.kind is Kind.SPLINE:
            return (self.nodes[0][0], self.nodes[-1][0])
        return (-math.inf, math.inf)

    def __call__(self, delta):
        return evaluate(self, delta)

    def node_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(self.nodes, dtype=float)
        return pts[:, 0], pts[:, 1]

    # serialization

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "hwhm": self.hwhm}
        if self.nodes is not None:
            out["nodes"] = [[x, y * self.scale] for x, y in self.nodes]
        elif self.scale != 1.0:
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Lineshape":
        try:
            kind = data["kind"]
        except KeyError as err:
            raise InvalidLineshapeError("lineshape JSON needs a 'kind' field") from err
        nodes = data.get("nodes")
        return cls(
            kind,
            float(data.get("hwhm", 1.0)),
            None if nodes is None else tuple(tuple(p) for p in nodes),
            float(data.get("scale", 1.0)),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "Lineshape":
        if isinstance(source, (str, Path)) and Path(str(source)).suffix == ".json" and Path(source).exists():
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))


def evaluate(lineshape: Lineshape, delta):
    """Spectral density f(delta); scalar in, scalar out, array in, array out.

    The rectangle takes half its height exactly on its edges, so that a
    uniform grid with nodes on the edges integrates it without bias.
    """
    x = np.asarray(delta, dtype=float)
    h = lineshape.hwhm
    kind = lineshape.kind
    if kind is Kind.RECTANGULAR:
        ax = np.abs(x)
        edge = np.isclose(ax, h, rtol=1e-9, atol=0.0)
        f = np.where(ax < h, 0.5 / h, 0.0)
        f = np.where(edge, 0.25 / h, f)
    elif kind is Kind.GAUSSIAN:
        f = math.sqrt(math.log(2) / math.pi) / h * np.exp(-math.log(2) * (x / h) ** 2)
    elif kind is Kind.LORENTZIAN:
        f = (h / math.pi) / (x**2 + h**2)
    else:
        f = lineshape._interp(x)
        f = np.where(np.isnan(f), 0.0, np.maximum(f, 0.0))
    f = lineshape.scale * f
    return float(f) if np.ndim(f) == 0 else f


def sample(lineshape: Lineshape, grid: FrequencyGrid) -> np.ndarray:
    return np.asarray(evaluate(lineshape, grid.nodes), dtype=float)


def quadrature_norm(lineshape: Lineshape, grid: FrequencyGrid) -> float:
    return float(np.sum(sample(lineshape, grid) * grid.weights))


def normalize(lineshape: Lineshape, grid: FrequencyGrid) -> Lineshape:
    """Rescale so that sum_j f(delta_j) w_j == 1 on ``grid``."""
    total = quadrature_norm(lineshape, grid)
    if not total > 0 or not math.isfinite(total):
        raise DegenerateLineshapeError("lineshape has no weight on the grid")
    if lineshape.kind is Kind.SPLINE:
        pos, val = lineshape.node_arrays()
        return Lineshape.spline(pos, val * (lineshape.scale / total), lineshape.hwhm)
    return replace(lineshape, scale=lineshape.scale / total)


def perturb_quadratic(base: Lineshape, coefficient: float, grid: FrequencyGrid, n_nodes: int = 51) -> Lineshape:
    """Rectangle plus ``coefficient * delta**2`` on its support, clamped at zero, renormalized.

    Positive coefficients sharpen the edges into cusps, negative ones round them.
    """
    if base.kind is not Kind.RECTANGULAR:
        raise InvalidLineshapeError("quadratic perturbation is defined for Rectangular lineshapes")
    lo, hi = base.support
    pos = np.linspace(lo, hi, n_nodes)
    val = np.maximum(base.scale * 0.5 / base.hwhm + coefficient * pos**2, 0.0)
    return normalize(Lineshape.spline(pos, val, base.hwhm), grid)


def half_width(lineshape: Lineshape, span: float | None = None, n: int = 200001) -> float:
    """HWHM of the evaluated curve, read off a dense sample (right flank)."""
    span = 10.0 * lineshape.hwhm if span is None else span
    x = np.linspace(0.0, span, n)
    f = np.asarray(evaluate(lineshape, x))
    half = 0.5 * f.max()
    above = np.nonzero(f >= half)[0]
    i = above[-1]
    if i + 1 >= x.size:
        return float(x[-1])
    # linear interpolation of the downward crossing
    f0, f1 = f[i], f[i + 1]
    if f0 == f1:
        return float(x[i])
    return float(x[i] + (f0 - half) / (f0 - f1) * (x[i + 1] - x[i]))


def write_csv(lineshape: Lineshape, grid: FrequencyGrid, path) -> None:
    f = sample(lineshape, grid)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "f"])
        for x, y in zip(grid.nodes, f):
            writer.writerow([repr(float(x)), repr(float(y))])
