"""Geometry, velocity models, sources, receivers and source-time functions.

Units are km, s and km/s throughout. The vertical coordinate ``z`` is
non-positive below the free surface, which sits at ``z = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

Point = Tuple[float, float]


class DomainError(ValueError):
    """A point lies outside the domain of a velocity model or grid."""


class ConfigurationError(ValueError):
    """Simulation parameters are inconsistent (CFL, PML placement, ...)."""


# ---------------------------------------------------------------------------
# source-time function


def ricker(t, f0: float, A: float = 1.0):
    """Ricker wavelet ``A (1 - 2 pi^2 f0^2 t^2) exp(-pi^2 f0^2 t^2)``.

    Accepts scalars or arrays for ``t``.
    """
    if f0 <= 0:
        raise ValueError("f0 must be positive")
    arg = (math.pi * f0 * np.asarray(t, dtype=float)) ** 2
    out = A * (1.0 - 2.0 * arg) * np.exp(-arg)
    return float(out) if np.ndim(out) == 0 else out


def ricker_derivative(t, f0: float, A: float = 1.0):
    """Time derivative of :func:`ricker`."""
    if f0 <= 0:
        raise ValueError("f0 must be positive")
    t = np.asarray(t, dtype=float)
    p2 = (math.pi * f0) ** 2
    tt = t * t
    # factored as t * g(t^2) so the result is exactly odd in floating point
    out = A * t * (4.0 * p2 * p2 * tt - 6.0 * p2) * np.exp(-p2 * tt)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# discrete delta

# polynomial coefficients in |x|/h, lowest order first, one row per branch
_DELTA_BRANCHES = (
    (1.0, 0.0, -5.0 / 4.0, -35.0 / 12.0, 21.0 / 4.0, -25.0 / 12.0),
    (-4.0, 75.0 / 4.0, -245.0 / 8.0, 545.0 / 24.0, -63.0 / 8.0, 25.0 / 24.0),
    (18.0, -153.0 / 4.0, 255.0 / 8.0, -313.0 / 24.0, 21.0 / 8.0, -5.0 / 24.0),
)


def discrete_delta_1d(x, h: float):
    """Piecewise quintic regularised delta with support ``|x| <= 3h``.

    The 2D delta is the tensor product ``delta(x) * delta(z)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    r = np.abs(np.asarray(x, dtype=float)) / h
    out = np.zeros_like(r)
    lower = 0.0
    for k, coeffs in enumerate(_DELTA_BRANCHES):
        upper = k + 1.0
        mask = (r <= upper) if k == 0 else (r > lower) & (r <= upper)
        if np.any(mask):
            out[mask] = np.polynomial.polynomial.polyval(r[mask], coeffs) / h
        lower = upper
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid2D:
    """Uniform node grid; node ``(i, j)`` sits at ``(x0 + i h, z0 + j h)``."""

    x0: float
    z0: float
    nx: int
    nz: int
    h: float

    def __post_init__(self):
        if self.nx < 3 or self.nz < 3:
            raise ValueError("grid needs at least 3 nodes per axis")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.z0 + self.h * np.arange(self.nz)

    @property
    def x1(self) -> float:
        return self.x0 + (self.nx - 1) * self.h

    @property
    def z1(self) -> float:
        return self.z0 + (self.nz - 1) * self.h

    def contains(self, x: float, z: float, tol: float = 1e-9) -> bool:
        return (self.x0 - tol <= x <= self.x1 + tol) and (self.z0 - tol <= z <= self.z1 + tol)


# ---------------------------------------------------------------------------
# velocity models

Bounds = Tuple[float, float, float]  # (x_min, x_max, z_min); the top is always z = 0


class VelocityModel:
    """Base class. Subclasses carry ``bounds`` and implement :meth:`evaluate` on arrays."""

    bounds: Bounds
    name = "abstract"

    def evaluate(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def contains(self, x: float, z: float, tol: float = 1e-9) -> bool:
        x_min, x_max, z_min = self.bounds
        return (x_min - tol <= x <= x_max + tol) and (z_min - tol <= z <= tol)

    def on_grid(self, grid: Grid2D) -> np.ndarray:
        """Velocity sampled on ``grid`` as an array of shape ``(nz, nx)``."""
        X, Z = np.meshgrid(grid.x, grid.z)
        return self.evaluate(X, Z)

    def speed_range(self, h: float = 0.25) -> Tuple[float, float]:
        x_min, x_max, z_min = self.bounds
        xs = np.linspace(x_min, x_max, max(3, int(round((x_max - x_min) / h)) + 1))
        zs = np.linspace(z_min, 0.0, max(3, int(round(-z_min / h)) + 1))
        X, Z = np.meshgrid(xs, zs)
        c = self.evaluate(X, Z)
        return float(c.min()), float(c.max())


@dataclass(frozen=True)
class ConstantVelocity(VelocityModel):
    c0: float = 6.5
    bounds: Bounds = (0.0, 100.0, -100.0)

    name = "constant"

    def __post_init__(self):
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")

    def evaluate(self, x, z):
        return np.full(np.broadcast(np.asarray(x), np.asarray(z)).shape, float(self.c0))

    def speed_range(self, h: float = 0.25):
        return float(self.c0), float(self.c0)


@dataclass(frozen=True)
class TwoLayerDeep(VelocityModel):
    """Two-layer crust used for the deep event (interface at z = -15 km)."""

    bounds: Bounds = (0.0, 100.0, -40.0)

    name = "two_layer_deep"

    def evaluate(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        lateral = 0.2 * np.sin(np.pi * x / 25.0)
        return np.where(z >= -15.0, 5.2 - 0.06 * z + lateral, 6.2 + lateral)


@dataclass(frozen=True)
class TwoLayerShallow(VelocityModel):
    """Two-layer crust used for the shallow event (interface at z = -20 km)."""

    bounds: Bounds = (0.0, 100.0, -40.0)

    name = "two_layer_shallow"

    def evaluate(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        lateral = 0.2 * np.sin(np.pi * x / 25.0)
        return np.where(z >= -20.0, 5.2 - 0.05 * z + lateral, 6.8 + lateral)


@dataclass(frozen=True)
class SubductionVelocity(VelocityModel):
    """Crust over mantle with an undulated Moho and a dipping slab."""

    bounds: Bounds = (0.0, 200.0, -200.0)

    name = "subduction"

    def evaluate(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        moho = -33.0 - 2.5 * np.sin(np.pi * x / 40.0)
        slab = -0.4 * x
        # the surface row itself belongs to the crust
        conds = [
            z >= moho,
            z >= -45.0 + slab,
            z >= -60.0 + slab,
            z >= -100.0 + slab,
        ]
        return np.select(conds, [5.5, 7.8, 7.488, 8.268], default=7.8)


@dataclass(frozen=True)
class SampledVelocity(VelocityModel):
    """Velocity given on a grid; bilinear interpolation in between."""

    grid: Grid2D = None
    values: np.ndarray = field(default=None, repr=False)
    bounds: Bounds = None

    name = "sampled"

    def __post_init__(self):
        if self.grid is None or self.values is None:
            raise ValueError("sampled model needs a grid and values")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.nz, self.grid.nx):
            raise ValueError(f"values must have shape {(self.grid.nz, self.grid.nx)}, got {vals.shape}")
        if not np.all(vals > 0):
            raise ValueError("wave speed must be positive everywhere")
        if abs(self.grid.z1) > 1e-9:
            raise ValueError("sampled grid must end at the surface z = 0")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "bounds", (self.grid.x0, self.grid.x1, self.grid.z0))

    def evaluate(self, x, z):
        g = self.grid
        fx = np.clip((np.asarray(x, dtype=float) - g.x0) / g.h, 0.0, g.nx - 1.0)
        fz = np.clip((np.asarray(z, dtype=float) - g.z0) / g.h, 0.0, g.nz - 1.0)
        i = np.minimum(np.floor(fx).astype(int), g.nx - 2)
        j = np.minimum(np.floor(fz).astype(int), g.nz - 2)
        a = fx - i
        b = fz - j
        v = self.values
        return ((1 - a) * (1 - b) * v[j, i] + a * (1 - b) * v[j, i + 1]
                + (1 - a) * b * v[j + 1, i] + a * b * v[j + 1, i + 1])

    def speed_range(self, h: float = 0.25):
        return float(self.values.min()), float(self.values.max())


def velocity_at(model: VelocityModel, x: float, z: float) -> float:
    """Wave speed at one point; raises :class:`DomainError` outside the model."""
    if not model.contains(x, z):
        raise DomainError(f"point ({x}, {z}) is outside the {model.name} model domain {model.bounds}")
    return float(model.evaluate(np.asarray(x), np.asarray(z)))


# ---------------------------------------------------------------------------
# sources and receivers


@dataclass(frozen=True)
class SourceParams:
    xi: Point
    tau: float
    f0: float = 2.0
    A: float = 1.0

    def __post_init__(self):
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        object.__setattr__(self, "xi", (float(self.xi[0]), float(self.xi[1])))
        object.__setattr__(self, "tau", float(self.tau))

    def wavelet(self, t):
        return ricker(np.asarray(t) - self.tau, self.f0, self.A)

    def wavelet_derivative(self, t):
        return ricker_derivative(np.asarray(t) - self.tau, self.f0, self.A)

    @property
    def is_compatible(self) -> bool:
        """The wavelet is negligible at t = 0 (|f(-tau)| < 1e-8 |A|)."""
        return abs(ricker(-self.tau, self.f0, self.A)) < 1e-8 * abs(self.A) or self.A == 0

    def warn_if_incompatible(self):
        if not self.is_compatible:
            warnings.warn(
                f"source wavelet is not negligible at t=0 (tau={self.tau} s, f0={self.f0} Hz); "
                "the record starts mid-pulse",
                stacklevel=3,
            )

    def moved(self, xi: Point = None, tau: float = None) -> "SourceParams":
        return SourceParams(self.xi if xi is None else xi, self.tau if tau is None else tau, self.f0, self.A)


@dataclass(frozen=True)
class ReceiverArray:
    positions: Tuple[Point, ...]

    def __post_init__(self):
        pos = tuple((float(x), float(z)) for x, z in self.positions)
        if not pos:
            raise ValueError("receiver array is empty")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(range(1, len(self.positions) + 1))

    def position(self, r: int) -> Point:
        """Position of the receiver with 1-based index ``r``."""
        return self.positions[r - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


def default_receivers(count: int = 20, spacing: float = 5.0) -> ReceiverArray:
    """``count`` equidistant surface stations at ``((r - 1/2) spacing, 0)``."""
    if count < 1 or spacing <= 0:
        raise ValueError("need count >= 1 and spacing > 0")
    return ReceiverArray(tuple(((r - 0.5) * spacing, 0.0) for r in range(1, count + 1)))


# horizontal positions of the 12 irregular stations used with the subduction model
SUBDUCTION_STATIONS_X = (21.0, 33.0, 39.0, 58.0, 68.0, 74.0, 86.0, 98.0, 126.0, 132.0, 158.0, 197.0)


def subduction_receivers() -> ReceiverArray:
    return ReceiverArray(tuple((x, 0.0) for x in SUBDUCTION_STATIONS_X))


def receivers_from_x(xs: Sequence[float]) -> ReceiverArray:
    return ReceiverArray(tuple((float(x), 0.0) for x in xs))


# ---------------------------------------------------------------------------
# simulation settings


@dataclass(frozen=True)
class SimConfig:
    """Time sampling and boundary settings shared by every propagation engine.

    ``dt=None`` picks ``cfl * h / c_max`` once the model is known.
    ``pml=False`` turns every outer edge into a reflecting (zero-flux) wall.
    """

    T: float
    dt: float = None
    h: float = 0.25
    cfl: float = 0.2
    pml_width: int = 20
    pml_reflectivity: float = 1e-6
    pml: bool = True
    engine: str = "auto"  # auto | fd | analytic

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("record length T must be positive")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if not 0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.engine not in ("auto", "fd", "analytic"):
            raise ValueError(f"unknown engine {self.engine!r}")

    def time_step(self, c_max: float) -> float:
        limit = self.cfl * self.h / c_max
        if self.dt is None:
            return limit
        if self.dt > limit * (1 + 1e-12):
            raise ConfigurationError(
                f"dt={self.dt} s violates the CFL limit {limit:.6g} s (cfl={self.cfl}, h={self.h}, c_max={c_max})"
            )
        return self.dt

    def n_samples(self, dt: float) -> int:
        return int(math.floor(self.T / dt + 1e-9)) + 1


def default_record_length(model: VelocityModel, source: SourceParams, receivers: ReceiverArray) -> float:
    """``tau + farthest straight-ray travel time (at the slowest speed) + 6 / f0``."""
    c_min, _ = model.speed_range()
    far = max(math.dist(source.xi, p) for p in receivers.positions)
    return source.tau + far / c_min + 6.0 / source.f0
