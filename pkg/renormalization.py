"""
Renormalization of Lorenz maps.

Given a verified window C = [p, q] of type (n, m), the first return map is
f^{n+1} on L = [p, c] and f^{m+1} on R = [c, q]. Rescaled by A = ξ_C it is again
a Lorenz map (ũ, ṽ, c̃, φ̃, ψ̃) with

    c̃ = |L|/|C|,   ũ = |Q(L)|/|U|,   ṽ = |Q(R)|/|V|,
    φ̃ = Z(f₁ⁿ∘φ; U),   ψ̃ = Z(f₀ᵐ∘ψ; V),

U = [Q(p), φ⁻¹f₁⁻ⁿ(q)] and V = [ψ⁻¹f₀⁻ᵐ(p), Q(q)]. The formula-built map is
checked against the directly iterated return map before the coefficients are
refit to the grid.
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from combinatorics import MonotoneType, RenormalizationData, detect_monotone
from diffeomorphism import (
    ComposedMap,
    Diffeomorphism,
    GridDiffeomorphism,
    MonotoneMap,
    _as_array,
    _restore,
    identity,
    linear_combination,
    nonlinearity,
    zoom,
)
from error_handler import LorenzDomainError, RenormalizationInconsistency
from lorenz_map import LorenzMap, StandardParams, inverse_branch
from metrics_collector import metrics

logger = logging.getLogger(__name__)

DEFAULT_STEP_TOL = 1e-9
DEFAULT_CHECK_POINTS = 100
DEFAULT_FIT_POINTS = 1000
CHECK_SEED = 20240607


class ReturnMap:
    """Prerenormalization: f^{n+1} on L and f^{m+1} on R by direct iteration."""

    def __init__(self, f: LorenzMap, data: RenormalizationData):
        self.f = f
        self.data = data

    @property
    def window(self):
        return self.data.C

    def __call__(self, x):
        arr, scalar = _as_array(x)
        d = self.data
        if np.any(arr < d.p - 1e-15) or np.any(arr > d.q + 1e-15):
            raise LorenzDomainError(
                f"return map evaluated outside C = [{d.p}, {d.q}]",
                {"min": float(arr.min()), "max": float(arr.max())},
            )
        if np.any(arr == d.c):
            raise LorenzDomainError(f"return map evaluated at the critical point c={d.c}")
        left = arr < d.c
        out = np.empty_like(arr)
        if np.any(left):
            out[left] = self.f.iterate(arr[left], d.type.n + 1)
        if not np.all(left):
            out[~left] = self.f.iterate(arr[~left], d.type.m + 1)
        return _restore(out, scalar)

    def rescaled(self, x):
        """A⁻¹ ∘ 𝒫 ∘ A on [0,1] minus the rescaled critical point."""
        d = self.data
        length = d.q - d.p
        arr, scalar = _as_array(x)
        points = np.clip(d.p + length * arr, d.p, d.q)
        return _restore((np.asarray(self(points)) - d.p) / length, scalar)


def prerenormalize(f: LorenzMap, data: RenormalizationData) -> ReturnMap:
    return ReturnMap(f, data)


@dataclass
class RenormStep:
    """One renormalization with its consistency measurements."""
    input: LorenzMap
    data: RenormalizationData
    output: LorenzMap
    residual: float
    fit_residual: float
    lazy_output: Optional[LorenzMap] = None

    @property
    def type(self) -> MonotoneType:
        return self.data.type

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input": self.input.to_dict(),
            "data": self.data.to_dict(),
            "output": self.output.to_dict(),
            "residual": self.residual,
            "fit_residual": self.fit_residual,
        }


def _branch_power(branch: MonotoneMap, times: int, inner: MonotoneMap) -> MonotoneMap:
    g = inner
    for _ in range(times):
        g = ComposedMap(branch, g)
    return g


def _pull_back(f: LorenzMap, y: float, side: str, times: int) -> float:
    for _ in range(times):
        y = float(inverse_branch(y, f, side))
    return y


def renormalization_step(
    f: LorenzMap,
    data: Union[RenormalizationData, MonotoneType, tuple],
    tol: float = DEFAULT_STEP_TOL,
    check_points: int = DEFAULT_CHECK_POINTS,
    grid_size: Optional[int] = None,
    fit_points: int = DEFAULT_FIT_POINTS,
) -> RenormStep:
    """
    Renormalize f along a verified window (or detect one for a given type).

    Raises:
        NotRenormalizable: detection fails for a requested type
        RenormalizationInconsistency: formula and direct return map disagree
    """
    if not isinstance(data, RenormalizationData):
        kind = MonotoneType.from_value(data)
        data = detect_monotone(f, kind.n, kind.m)

    start = time.time()
    metrics.increment('renormalizations_total')
    size = grid_size or f.grid_size
    n, m = data.type.n, data.type.m
    p, q, c = data.p, data.q, data.c
    rho = f.rho

    len_l, len_r = c - p, q - c
    len_c = q - p
    q_left = f.u * (len_l / c) ** rho
    q_right = f.v * (len_r / f.mu) ** rho

    u_lo = f.u - q_left
    u_hi = float(f.phi.inverse(_pull_back(f, q, "right", n)))
    v_lo = float(f.psi.inverse(_pull_back(f, p, "left", m)))
    v_hi = 1.0 - f.v + q_right

    new_c = len_l / len_c
    new_u = _clip_unit(q_left / (u_hi - u_lo), "u")
    new_v = _clip_unit(q_right / (v_hi - v_lo), "v")

    phi_lazy = zoom(_branch_power(f.right_branch, n, f.phi), (u_lo, u_hi), size)
    psi_lazy = zoom(_branch_power(f.left_branch, m, f.psi), (v_lo, v_hi), size)
    params = StandardParams(new_u, new_v, new_c, rho)
    lazy = LorenzMap(params, phi_lazy, psi_lazy)

    residual = _return_map_residual(lazy, ReturnMap(f, data), check_points)
    if not residual <= tol:
        metrics.increment('renormalizations_failed')
        raise RenormalizationInconsistency(
            f"renormalized map disagrees with the return map (residual {residual:.3e} > {tol:.1e})",
            {"residual": residual, "tol": tol, "type": data.type.to_list(), "p": p, "q": q},
        )

    phi_grid = GridDiffeomorphism.from_map(phi_lazy, size)
    psi_grid = GridDiffeomorphism.from_map(psi_lazy, size)
    output = LorenzMap(params, phi_grid, psi_grid)
    fit_residual = max(
        _fit_residual(phi_grid, phi_lazy, fit_points),
        _fit_residual(psi_grid, psi_lazy, fit_points),
    )

    if not output.is_nontrivial():
        metrics.increment('renormalizations_failed')
        raise RenormalizationInconsistency(
            "renormalized map is trivial",
            {"c": new_c, "c1_minus": output.c1_minus, "c1_plus": output.c1_plus},
        )

    metrics.record_duration('renormalize_seconds', time.time() - start)
    logger.debug(
        f"Renormalized type {data.type}: u={new_u:.12g} v={new_v:.12g} c={new_c:.12g} "
        f"residual={residual:.2e} fit={fit_residual:.2e}"
    )
    return RenormStep(f, data, output, residual, fit_residual, lazy_output=lazy)


def renormalize(
    f: LorenzMap,
    data: Union[RenormalizationData, MonotoneType, tuple],
    tol: float = DEFAULT_STEP_TOL,
    grid_size: Optional[int] = None,
) -> LorenzMap:
    """R[f] with grid coefficients."""
    return renormalization_step(f, data, tol=tol, grid_size=grid_size).output


def _clip_unit(value: float, name: str) -> float:
    if -1e-12 <= value < 0.0:
        return 0.0
    if 1.0 < value <= 1.0 + 1e-12:
        return 1.0
    if not 0.0 <= value <= 1.0:
        raise RenormalizationInconsistency(
            f"renormalized {name} = {value!r} leaves [0,1]", {name: value}
        )
    return value


def _sample_points(c: float, count: int) -> np.ndarray:
    rng = np.random.default_rng(CHECK_SEED)
    xs = rng.uniform(0.0, 1.0, count)
    xs = np.concatenate([[0.0, 1.0], xs])
    return xs[xs != c]


def _return_map_residual(lazy: LorenzMap, return_map: ReturnMap, check_points: int) -> float:
    xs = _sample_points(lazy.c, check_points)
    formula = np.asarray(lazy(xs))
    direct = np.asarray(return_map.rescaled(xs))
    return float(np.max(np.abs(formula - direct)))


def _fit_residual(grid: Diffeomorphism, lazy: Diffeomorphism, points: int) -> float:
    xs = np.linspace(0.0, 1.0, points)
    return float(np.max(np.abs(np.asarray(grid(xs)) - np.asarray(lazy(xs)))))


def refit(phi: Diffeomorphism, grid_size: Optional[int] = None, fit_points: int = DEFAULT_FIT_POINTS):
    """
    Sample N_φ on the grid.

    Returns:
        (GRID diffeomorphism, sup of |refit − φ| at fit_points evaluation points)
    """
    size = grid_size or phi.grid_size
    grid = GridDiffeomorphism.from_map(phi, size)
    if grid is phi:
        return grid, 0.0
    return grid, _fit_residual(grid, phi, fit_points)


def deformation_retract(f: LorenzMap, t: float, c0: float) -> LorenzMap:
    """π_t(f) = (u, v, c + t(c₀ − c), (1−t)φ + t·id, (1−t)ψ + t·id)."""
    if not 0.0 <= t <= 1.0:
        raise LorenzDomainError(f"retract parameter must lie in [0,1], got {t}")
    if not 0.0 < c0 < 1.0:
        raise LorenzDomainError(f"c0 must lie in (0,1), got {c0}")
    if t == 0.0:
        return f
    size = f.grid_size
    ident = identity(size)
    params = StandardParams(f.u, f.v, f.c + t * (c0 - f.c), f.rho)
    return LorenzMap(
        params,
        linear_combination(1.0 - t, f.phi, t, ident, size),
        linear_combination(1.0 - t, f.psi, t, ident, size),
    )


def map_distance(f: LorenzMap, g: LorenzMap, grid_size: Optional[int] = None) -> float:
    """sup(|Δu|, |Δv|, |Δc|, ‖ΔN_φ‖∞, ‖ΔN_ψ‖∞) on a common grid."""
    size = grid_size or max(f.grid_size, g.grid_size)
    return float(max(
        abs(f.u - g.u),
        abs(f.v - g.v),
        abs(f.c - g.c),
        np.max(np.abs(nonlinearity(f.phi, size) - nonlinearity(g.phi, size))),
        np.max(np.abs(nonlinearity(f.psi, size) - nonlinearity(g.psi, size))),
    ))


def retract_path(f: LorenzMap, c0: float, ts=(0.0, 0.25, 0.5, 0.75, 1.0)):
    """Retracted maps at the given parameters, as (t, map) pairs."""
    return [(float(t), deformation_retract(f, float(t), c0)) for t in ts]

