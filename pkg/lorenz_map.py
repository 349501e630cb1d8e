"""
Lorenz maps and the standard Lorenz family.

A Lorenz map is the quintuple (u, v, c, φ, ψ) together with the critical
exponent ρ:

    f(x) = φ(Q(x)) for x < c,    f(x) = ψ(Q(x)) for x > c

where Q is the standard family with left branch u(1 − ((c−x)/c)^ρ) and right
branch 1 + v(−1 + ((x−c)/(1−c))^ρ). This module evaluates maps, their
derivatives and inverse branches, critical orbits and Schwarzian derivatives,
and reads/writes the JSON form used by job specs and artifacts.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from diffeomorphism import (
    DEFAULT_GRID_SIZE,
    ComposedMap,
    Diffeomorphism,
    GridDiffeomorphism,
    Jet,
    MonotoneMap,
    _as_array,
    _restore,
    identity,
    nonlinearity,
    schwarzian_derivative,
)
from error_handler import LorenzDomainError, RepresentationError

logger = logging.getLogger(__name__)

DEFAULT_COLLISION_TOL = 1e-13
ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class StandardParams:
    """Parameters (u, v, c, ρ) of the standard Lorenz family."""
    u: float
    v: float
    c: float
    rho: float

    def __post_init__(self):
        for name in ("u", "v", "c", "rho"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise LorenzDomainError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.u <= 1.0:
            raise LorenzDomainError(f"u must lie in [0,1], got {self.u}")
        if not 0.0 <= self.v <= 1.0:
            raise LorenzDomainError(f"v must lie in [0,1], got {self.v}")
        if not 0.0 < self.c < 1.0:
            raise LorenzDomainError(f"c must lie in (0,1), got {self.c}")
        if not self.rho > 1.0:
            raise LorenzDomainError(f"rho must exceed 1, got {self.rho}")

    @property
    def mu(self) -> float:
        return 1.0 - self.c

    def to_dict(self) -> Dict[str, float]:
        return {"u": self.u, "v": self.v, "c": self.c, "rho": self.rho}


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]."""
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise LorenzDomainError(f"interval endpoints must be finite, got [{lo}, {hi}]")
        if lo > hi:
            raise LorenzDomainError(f"interval endpoints out of order: [{lo}, {hi}]")
        if lo < -1e-12 or hi > 1 + 1e-12:
            raise LorenzDomainError(f"interval [{lo}, {hi}] leaves [0,1]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: ArrayLike, tol: float = 0.0) -> Union[bool, np.ndarray]:
        return (np.asarray(x) >= self.lo - tol) & (np.asarray(x) <= self.hi + tol)

    def contains_interval(self, other: "Interval", tol: float = 0.0) -> bool:
        return other.lo >= self.lo - tol and other.hi <= self.hi + tol

    def interior_disjoint(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.hi <= other.lo + tol or other.hi <= self.lo + tol

    def to_list(self):
        return [self.lo, self.hi]

    @classmethod
    def from_value(cls, value) -> "Interval":
        lo, hi = value
        return cls(lo, hi)


class LeftPowerBranch(MonotoneMap):
    """Q on [0,c]: x ↦ u(1 − ((c−x)/c)^ρ)."""

    def __init__(self, params: StandardParams):
        self.params = params

    def _values(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        t = np.clip((p.c - x) / p.c, 0.0, None)
        return p.u * (1.0 - t ** p.rho)

    def jet(self, x: np.ndarray) -> Jet:
        p = self.params
        x = np.asarray(x, dtype=float)
        t = np.clip((p.c - x) / p.c, 0.0, None)
        with np.errstate(divide="ignore"):
            n = -(p.rho - 1.0) / (p.c - x)
        return p.u * (1.0 - t ** p.rho), p.u * p.rho / p.c * t ** (p.rho - 1.0), n

    def inverse(self, y: np.ndarray) -> np.ndarray:
        p = self.params
        if p.u == 0.0:
            raise LorenzDomainError("left branch is constant (u = 0) and has no inverse")
        ratio = np.clip((p.u - y) / p.u, 0.0, 1.0)
        return p.c - p.c * ratio ** (1.0 / p.rho)


class RightPowerBranch(MonotoneMap):
    """Q on [c,1]: x ↦ 1 + v(−1 + ((x−c)/(1−c))^ρ)."""

    def __init__(self, params: StandardParams):
        self.params = params

    def _values(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        t = np.clip((x - p.c) / p.mu, 0.0, None)
        return 1.0 + p.v * (t ** p.rho - 1.0)

    def jet(self, x: np.ndarray) -> Jet:
        p = self.params
        x = np.asarray(x, dtype=float)
        t = np.clip((x - p.c) / p.mu, 0.0, None)
        with np.errstate(divide="ignore"):
            n = (p.rho - 1.0) / (x - p.c)
        return 1.0 + p.v * (t ** p.rho - 1.0), p.v * p.rho / p.mu * t ** (p.rho - 1.0), n

    def inverse(self, y: np.ndarray) -> np.ndarray:
        p = self.params
        if p.v == 0.0:
            raise LorenzDomainError("right branch is constant (v = 0) and has no inverse")
        ratio = np.clip(1.0 - (1.0 - y) / p.v, 0.0, 1.0)
        return p.c + p.mu * ratio ** (1.0 / p.rho)


def _check_domain(x: np.ndarray, c: float) -> None:
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise LorenzDomainError("point outside [0,1]", {"min": float(np.nanmin(x)), "max": float(np.nanmax(x))})
    if np.any(x == c):
        raise LorenzDomainError(f"evaluation at the critical point c={c}", {"c": c})


def standard_eval(x: ArrayLike, params: StandardParams) -> ArrayLike:
    """Q(x) of the standard family, x ∈ [0,1] \\ {c}."""
    arr, scalar = _as_array(x)
    _check_domain(arr, params.c)
    left = arr < params.c
    out = np.empty_like(arr)
    out[left] = LeftPowerBranch(params)._values(arr[left])
    out[~left] = RightPowerBranch(params)._values(arr[~left])
    return _restore(out, scalar)


@dataclass(frozen=True)
class CriticalOrbit:
    """c_1^±, ..., c_k^± with the step at which the orbit met c, if it did."""
    side: str
    points: np.ndarray
    collision_step: Optional[int] = None

    @property
    def collided(self) -> bool:
        return self.collision_step is not None


@dataclass(frozen=True, eq=False)
class LorenzMap:
    """A Lorenz map (u, v, c, ρ, φ, ψ)."""
    params: StandardParams
    phi: Diffeomorphism
    psi: Diffeomorphism

    @classmethod
    def standard(cls, u: float, v: float, c: float, rho: float, grid_size: int = DEFAULT_GRID_SIZE) -> "LorenzMap":
        """Member of the standard family (identity coefficients)."""
        ident = identity(grid_size)
        return cls(StandardParams(u, v, c, rho), ident, ident)

    @property
    def u(self) -> float:
        return self.params.u

    @property
    def v(self) -> float:
        return self.params.v

    @property
    def c(self) -> float:
        return self.params.c

    @property
    def rho(self) -> float:
        return self.params.rho

    @property
    def mu(self) -> float:
        return self.params.mu

    @property
    def grid_size(self) -> int:
        return max(self.phi.grid_size, self.psi.grid_size)

    @property
    def left_branch(self) -> MonotoneMap:
        """f₀ = φ∘Q on [0,c]."""
        return ComposedMap(self.phi, LeftPowerBranch(self.params))

    @property
    def right_branch(self) -> MonotoneMap:
        """f₁ = ψ∘Q on [c,1]."""
        return ComposedMap(self.psi, RightPowerBranch(self.params))

    @property
    def c1_minus(self) -> float:
        return float(self.phi(self.u))

    @property
    def c1_plus(self) -> float:
        return float(self.psi(1.0 - self.v))

    def is_nontrivial(self) -> bool:
        """c₁⁺ < c < c₁⁻; otherwise f has a globally attracting fixed point."""
        return self.c1_plus < self.c < self.c1_minus

    def f0(self, x: ArrayLike) -> ArrayLike:
        """Left branch, extended to x = c by its limit c₁⁻."""
        arr, scalar = _as_array(x)
        return _restore(self.phi._values(LeftPowerBranch(self.params)._values(arr)), scalar)

    def f1(self, x: ArrayLike) -> ArrayLike:
        """Right branch, extended to x = c by its limit c₁⁺."""
        arr, scalar = _as_array(x)
        return _restore(self.psi._values(RightPowerBranch(self.params)._values(arr)), scalar)

    def step(self, x: ArrayLike) -> ArrayLike:
        """
        One step of the dynamics without domain checks; x = c is sent to c₁⁺.

        Orbit loops use this and test collisions themselves.
        """
        arr, scalar = _as_array(x)
        left = arr < self.c
        out = np.empty_like(arr)
        if np.any(left):
            out[left] = self.f0(arr[left])
        if not np.all(left):
            out[~left] = self.f1(arr[~left])
        return _restore(out, scalar)

    def iterate(self, x: ArrayLike, steps: int) -> ArrayLike:
        for _ in range(steps):
            x = self.step(x)
        return x

    def __call__(self, x: ArrayLike) -> ArrayLike:
        return lorenz_eval(x, self)

    def derivative(self, x: ArrayLike) -> ArrayLike:
        return lorenz_derivative(x, self)

    def inverse_branch(self, y: ArrayLike, side: str) -> ArrayLike:
        return inverse_branch(y, self, side)

    def with_params(self, **changes: float) -> "LorenzMap":
        values = self.params.to_dict()
        values.update(changes)
        return LorenzMap(StandardParams(**values), self.phi, self.psi)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = dict(self.params.to_dict())
        data["phi"] = _coefficient_to_json(self.phi)
        data["psi"] = _coefficient_to_json(self.psi)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], grid_size: int = DEFAULT_GRID_SIZE) -> "LorenzMap":
        missing = [key for key in ("u", "v", "c", "rho") if key not in data]
        if missing:
            raise LorenzDomainError(f"map is missing keys: {missing}")
        params = StandardParams(data["u"], data["v"], data["c"], data["rho"])
        phi = _coefficient_from_json(data.get("phi", "id"), grid_size)
        psi = _coefficient_from_json(data.get("psi", "id"), grid_size)
        return cls(params, phi, psi)

    def __repr__(self) -> str:
        p = self.params
        return f"LorenzMap(u={p.u:.12g}, v={p.v:.12g}, c={p.c:.12g}, rho={p.rho:g}, phi={self.phi!r}, psi={self.psi!r})"


def _coefficient_to_json(phi: Diffeomorphism):
    if phi.is_identity:
        return "id"
    return {"grid": [float(s) for s in nonlinearity(phi)]}


def _coefficient_from_json(value, grid_size: int) -> GridDiffeomorphism:
    if value == "id" or value is None:
        return identity(grid_size)
    if isinstance(value, dict) and "grid" in value:
        return GridDiffeomorphism(value["grid"])
    raise RepresentationError(f"coefficient must be 'id' or {{'grid': [...]}}, got {type(value).__name__}")


def lorenz_eval(x: ArrayLike, f: LorenzMap) -> ArrayLike:
    """f(x) = φ(Q(x)) for x < c, ψ(Q(x)) for x > c."""
    arr, _ = _as_array(x)
    _check_domain(arr, f.c)
    return f.step(x)


def lorenz_derivative(x: ArrayLike, f: LorenzMap) -> ArrayLike:
    """D(φ∘Q)(x) resp. D(ψ∘Q)(x)."""
    arr, scalar = _as_array(x)
    _check_domain(arr, f.c)
    left = arr < f.c
    out = np.empty_like(arr)
    if np.any(left):
        out[left] = f.left_branch.jet(arr[left])[1]
    if not np.all(left):
        out[~left] = f.right_branch.jet(arr[~left])[1]
    return _restore(out, scalar)


def inverse_branch(y: ArrayLike, f: LorenzMap, side: str, tol: float = 1e-14) -> ArrayLike:
    """
    f₀⁻¹(y) = c − c((u−φ⁻¹(y))/u)^{1/ρ} on [0, c₁⁻], or
    f₁⁻¹(y) = c + μ(1−(1−ψ⁻¹(y))/v)^{1/ρ} on [c₁⁺, 1].
    """
    arr, scalar = _as_array(y)
    if side == "left":
        top = f.c1_minus
        if np.any(arr < -tol) or np.any(arr > top + tol):
            raise LorenzDomainError(
                f"y outside the left branch image [0, {top}]",
                {"min": float(np.min(arr)), "max": float(np.max(arr)), "c1_minus": top},
            )
        pre = f.phi.inverse(np.clip(arr, 0.0, top))
        return _restore(LeftPowerBranch(f.params).inverse(pre), scalar)
    if side == "right":
        bottom = f.c1_plus
        if np.any(arr < bottom - tol) or np.any(arr > 1.0 + tol):
            raise LorenzDomainError(
                f"y outside the right branch image [{bottom}, 1]",
                {"min": float(np.min(arr)), "max": float(np.max(arr)), "c1_plus": bottom},
            )
        pre = f.psi.inverse(np.clip(arr, bottom, 1.0))
        return _restore(RightPowerBranch(f.params).inverse(pre), scalar)
    raise LorenzDomainError(f"side must be 'left' or 'right', got {side!r}")


def schwarzian(f: LorenzMap, x: ArrayLike, step: Optional[float] = None) -> ArrayLike:
    """Schwarzian derivative of the branch containing x, from N′ − N²/2."""
    arr, scalar = _as_array(x)
    _check_domain(arr, f.c)
    h = step if step is not None else 1e-4 / (f.grid_size - 1)
    out = np.empty_like(arr)
    left = arr < f.c
    for mask, branch in ((left, f.left_branch), (~left, f.right_branch)):
        if np.any(mask):
            points = arr[mask]
            # keep the stencil on one side of c
            local = np.minimum(h, 0.25 * np.abs(points - f.c))
            out[mask] = schwarzian_derivative(branch, points, local)
    return _restore(out, scalar)


def negative_schwarzian(f: LorenzMap, samples: int = 1000) -> bool:
    """Sampled check of S_f < 0 on both branches."""
    eps = 1e-6
    xs = np.concatenate([
        np.linspace(eps, f.c - eps, samples // 2),
        np.linspace(f.c + eps, 1.0 - eps, samples - samples // 2),
    ])
    return bool(np.all(np.asarray(schwarzian(f, xs)) < 0.0))


def critical_orbit(
    f: LorenzMap, side: str, k: int, collision_tol: float = DEFAULT_COLLISION_TOL
) -> CriticalOrbit:
    """c₁±, ..., c_k± with c_i± = f^{i−1}(c₁±); stops early on a collision."""
    if side not in ("-", "+"):
        raise LorenzDomainError(f"side must be '-' or '+', got {side!r}")
    if k < 1:
        raise LorenzDomainError(f"orbit depth must be positive, got {k}")
    x = f.c1_minus if side == "-" else f.c1_plus
    points = []
    collision = None
    for i in range(1, k + 1):
        points.append(x)
        if abs(x - f.c) < collision_tol:
            collision = i
            logger.warning(f"Critical orbit c{side} hits c at step {i} (x={x!r})")
            break
        if i < k:
            x = float(f.step(x))
    return CriticalOrbit(side=side, points=np.array(points), collision_step=collision)
