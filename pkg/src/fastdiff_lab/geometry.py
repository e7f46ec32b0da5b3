"""Cigar-manifold geometry and discrete radial function spaces.

The cigar is R^n with metric (1+|x|^2)^{-1} sum dx_i^2; its geodesic radius
is s = arsinh|x| and the volume element is tanh^{n-1}(s) ds dw.  All
computations here are per spherical-harmonic index l, so only radial
profiles over a uniform s-grid are needed.  B is normalized to 1 in cigar
coordinates (general B rescales x by sqrt(B) at the API boundary).

The equation is uniformly parabolic in s, so a uniform s-grid resolves the
Euclidean far field at logarithmic cost (r = sinh s).  Truncation at s_max
is justified by the exponential decay of everything we integrate; default
s_max = 12 reaches |x| ~ 8e4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .closedform import ModelParams

__all__ = [
    "RadialGrid",
    "GridFunction",
    "NormSpec",
    "make_grid",
    "refine",
    "s_of_r",
    "r_of_s",
    "volume_weight",
    "sphere_area",
    "integrate_cigar",
    "inner_product_uBm",
    "weighted_sup",
    "holder_seminorm",
    "norm",
    "cell_masses",
    "tail_estimate",
]


@dataclass(frozen=True)
class RadialGrid:
    """Uniform geodesic grid s_i = i h, i = 0..count, h = s_max/count."""

    s_max: float
    count: int

    @property
    def h(self) -> float:
        return self.s_max / self.count

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.s_max, self.count + 1)


def make_grid(s_max: float, count: int) -> RadialGrid:
    if s_max <= 0:
        raise ValueError(f"s_max must be positive, got {s_max}")
    if count < 16:
        raise ValueError(f"count must be >= 16, got {count}")
    return RadialGrid(float(s_max), int(count))


def refine(grid: RadialGrid) -> RadialGrid:
    """Halve h, preserving s_max."""
    return RadialGrid(grid.s_max, 2 * grid.count)


@dataclass
class GridFunction:
    """Radial profile riding on harmonic index l, sampled on all nodes."""

    grid: RadialGrid
    ell: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.count + 1,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.count + 1} nodes)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function contains non-finite values")
        if self.ell >= 1 and self.values[0] != 0.0:
            raise ValueError(
                f"l={self.ell} profiles must vanish at the origin, "
                f"got values[0]={self.values[0]}"
            )

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, self.ell, values)


@dataclass(frozen=True)
class NormSpec:
    """Which norm to evaluate: weighted sup/Hölder or the two L² variants."""

    kind: str  # weighted-sup | weighted-holder | L2-cigar | L2-uBm
    eta: float = 0.0
    alpha: float | None = None

    def __post_init__(self):
        kinds = ("weighted-sup", "weighted-holder", "L2-cigar", "L2-uBm")
        if self.kind not in kinds:
            raise ValueError(f"norm kind {self.kind!r} not one of {kinds}")
        if self.kind == "weighted-holder":
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise ValueError(f"Hölder exponent must be in ]0,1[, got {self.alpha}")


def s_of_r(r):
    """Geodesic radius s = arsinh r (B = 1)."""
    return np.arcsinh(r)


def r_of_s(s):
    """Euclidean radius r = sinh s (B = 1)."""
    return np.sinh(s)


def volume_weight(s, n: int):
    """Radial density tanh^{n-1}(s) of the cigar volume element."""
    s = np.asarray(s, dtype=float)
    if n == 1:
        return np.ones_like(s)
    return np.tanh(s) ** (n - 1)


def sphere_area(n: int) -> float:
    """Surface measure of S^{n-1}; 2 for n = 1 (two half-lines)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def _check_compatible(f: GridFunction, g: GridFunction):
    if f.grid != g.grid:
        raise ValueError("grid functions live on different grids")
    if f.ell != g.ell:
        raise ValueError(f"harmonic index mismatch: {f.ell} != {g.ell}")


def integrate_cigar(f: GridFunction, n: int) -> float:
    """Trapezoidal integral of f against the cigar volume weight tanh^{n-1}s ds."""
    s = f.grid.nodes
    return float(np.trapezoid(f.values * volume_weight(s, n), s))


def inner_product_uBm(f: GridFunction, g: GridFunction,
                      params: ModelParams) -> float:
    """<f, g> in L^2_{u_B^m}: integral f g u_B^m r^{n-1} dr (B = 1).

    In cigar coordinates the measure is (cosh s)^{-2 eta_cr} tanh^{n-1}s ds,
    which makes multiplication by (cosh s)^{-eta_cr} an isometry onto L^2 of
    the cigar.
    """
    _check_compatible(f, g)
    s = f.grid.nodes
    w = volume_weight(s, params.n) * np.cosh(s) ** (-2.0 * params.eta_cr)
    return float(np.trapezoid(f.values * g.values * w, s))


def weighted_sup(f: GridFunction, eta: float) -> float:
    """sup_i |(cosh s_i)^{-eta} f_i|."""
    return float(np.max(np.abs(np.cosh(f.grid.nodes) ** (-eta) * f.values)))


def holder_seminorm(f: GridFunction, spec: NormSpec) -> float:
    """Global Hölder seminorm of g = (cosh s)^{-eta} f over node pairs.

    On radial profiles the cigar geodesic distance between nodes is exactly
    |s_i - s_j|, so no chart/partition constant enters.
    """
    if spec.kind != "weighted-holder":
        raise ValueError(f"holder_seminorm needs a weighted-holder spec, got {spec.kind}")
    s = f.grid.nodes
    g = np.cosh(s) ** (-spec.eta) * f.values
    diff = np.abs(g[:, None] - g[None, :])
    dist = np.abs(s[:, None] - s[None, :])
    mask = dist > 0
    return float(np.max(diff[mask] / dist[mask] ** spec.alpha))


def norm(f: GridFunction, spec: NormSpec,
         params: ModelParams | None = None) -> float:
    """Evaluate the norm selected by ``spec``.

    weighted-holder returns max(weighted sup, seminorm), the full Hölder
    norm; the L2-uBm kind needs ``params``.
    """
    if spec.kind == "weighted-sup":
        return weighted_sup(f, spec.eta)
    if spec.kind == "weighted-holder":
        return max(weighted_sup(f, spec.eta), holder_seminorm(f, spec))
    if spec.kind == "L2-cigar":
        sq = GridFunction(f.grid, 0, f.values**2)
        return math.sqrt(max(integrate_cigar(sq, params.n if params else 3), 0.0))
    if params is None:
        raise ValueError("L2-uBm norm needs model parameters")
    return math.sqrt(max(inner_product_uBm(f, f, params), 0.0))


@lru_cache(maxsize=64)
def _cell_masses_cached(s_max: float, count: int, n: int, p: float) -> np.ndarray:
    """Cell integrals of mu(s) = sinh^{n-1}(s) cosh^{1-n-p}(s) = u_B r^{n-1} dr/ds."""
    grid = RadialGrid(s_max, count)
    h = grid.h
    nodes = grid.nodes[:-1]  # unknown cells only; node `count` is held at 0
    lo = np.maximum(nodes - h / 2.0, 0.0)
    hi = nodes + h / 2.0
    # 5-point Gauss-Legendre per cell; integrand is smooth
    gx, gw = np.polynomial.legendre.leggauss(5)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * gx[None, :]
    mu = np.sinh(pts) ** (n - 1) * np.cosh(pts) ** (1.0 - n - p)
    return (half[:, None] * (mu * gw[None, :])).sum(axis=1)


def cell_masses(grid: RadialGrid, params: ModelParams) -> np.ndarray:
    """Finite-volume masses of u_B r^{n-1} dr over node-centred s-cells (B=1).

    The nonlinear solver's flux form telescopes exactly against these
    weights, so sum(w * cell_masses) is a conserved discrete mass.
    """
    return _cell_masses_cached(grid.s_max, grid.count, params.n, params.p)


def tail_estimate(boundary_value: float, decay_rate: float) -> float:
    """Bound on a truncated tail integral_|s>s_max| ~ |f(s_max)| / rate.

    Assumes the integrand decays at least like e^{-rate (s - s_max)}; a
    non-positive rate means the tail does not converge and yields inf.
    """
    if decay_rate <= 0.0:
        return math.inf
    return abs(boundary_value) / decay_rate
