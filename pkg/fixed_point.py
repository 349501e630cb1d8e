"""
Periodic points of renormalization.

The search works on the coordinate vector (u, v, c, N_φ grid, N_ψ grid).
Renormalization expands in (u, v) and contracts in the remaining coordinates,
so each iteration first solves (ũ, ṽ) = (u, v) for the cycle with the other
coordinates held, then applies the cycle. An iterate whose (u, v) falls out of
the island of its own slice is moved back by an island search on that slice.
When the distance trace plateaus the search switches to a damped Newton solve
on the whole vector.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from combinatorics import MonotoneType
from diffeomorphism import GridDiffeomorphism, nonlinearity
from error_handler import (
    CombinatoricsLost,
    LorenzDomainError,
    LorenzLabError,
    NoConvergence,
)
from lorenz_map import LorenzMap, StandardParams
from metrics_collector import metrics
from parameter_search import SliceConfig, nested_island_search
from renormalization import map_distance, renormalization_step

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_BUDGET = 100
DEFAULT_JACOBIAN_STEP = 1e-7
DEFAULT_DAMPING = 0.5
DEFAULT_PLATEAU_WINDOW = 5
MAX_BACKTRACKS = 8
UNSTABLE_STEPS = 4
UNSTABLE_FLOOR = 1e-14
DEFAULT_RESEED_DEPTH = 2
RESEED_RESOLUTION = 128
RESEED_MAX_RESOLUTION = 512
RESEED_CANDIDATES = 16


@dataclass
class FixedPointResult:
    """Outcome of a successful periodic point search."""
    map: LorenzMap
    types: List[MonotoneType]
    distance: float
    iterations: int
    trace: List[float] = field(default_factory=list)
    phase: str = "iteration"
    orbit: List[LorenzMap] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "map": self.map.to_dict(),
            "types": [t.to_list() for t in self.types],
            "distance": self.distance,
            "iterations": self.iterations,
            "trace": list(self.trace),
            "phase": self.phase,
            "orbit": [g.to_dict() for g in self.orbit],
        }


def pack(f: LorenzMap, grid_size: int) -> np.ndarray:
    """(u, v, c, N_φ, N_ψ) as one vector."""
    return np.concatenate([
        [f.u, f.v, f.c],
        nonlinearity(f.phi, grid_size),
        nonlinearity(f.psi, grid_size),
    ])


def unpack(x: np.ndarray, rho: float, grid_size: int) -> LorenzMap:
    u, v, c = (float(s) for s in x[:3])
    params = StandardParams(float(np.clip(u, 0.0, 1.0)), float(np.clip(v, 0.0, 1.0)), c, rho)
    phi = GridDiffeomorphism(x[3:3 + grid_size])
    psi = GridDiffeomorphism(x[3 + grid_size:3 + 2 * grid_size])
    return LorenzMap(params, phi, psi)


class RenormalizationCycle:
    """f ↦ R_{ω_{k−1}} ∘ ... ∘ R_{ω_0}[f] with re-detection at every step."""

    def __init__(self, types: Sequence[MonotoneType], grid_size: int, step_tol: float):
        self.types = list(types)
        self.grid_size = grid_size
        self.step_tol = step_tol
        self.iteration = 0

    def orbit(self, f: LorenzMap) -> List[LorenzMap]:
        maps = [f]
        for kind in self.types:
            try:
                step = renormalization_step(maps[-1], kind, tol=self.step_tol, grid_size=self.grid_size)
            except LorenzLabError as e:
                raise CombinatoricsLost(
                    f"type {kind} lost at iteration {self.iteration}: {e}",
                    {"iteration": self.iteration, "type": kind.to_list(), "cause": type(e).__name__,
                     "map": maps[-1].to_dict()},
                ) from e
            maps.append(step.output)
        return maps

    def __call__(self, f: LorenzMap) -> LorenzMap:
        return self.orbit(f)[-1]


def _try_cycle(cycle: RenormalizationCycle, f: LorenzMap) -> Optional[LorenzMap]:
    try:
        return cycle(f)
    except LorenzLabError:
        return None


def _uv_residual(cycle: RenormalizationCycle, f: LorenzMap, u: float, v: float) -> np.ndarray:
    g = cycle(f.with_params(u=u, v=v))
    return np.array([g.u - u, g.v - v])


def _unstable_step(
    cycle: RenormalizationCycle,
    f: LorenzMap,
    residual: np.ndarray,
    h: float,
) -> Optional[Tuple[LorenzMap, np.ndarray]]:
    u, v = f.u, f.v
    jac = np.empty((2, 2))
    for k, (du, dv) in enumerate(((h, 0.0), (0.0, h))):
        try:
            jac[:, k] = (_uv_residual(cycle, f, u + du, v + dv) - residual) / h
        except LorenzLabError:
            try:
                jac[:, k] = (residual - _uv_residual(cycle, f, u - du, v - dv)) / h
            except LorenzLabError:
                return None
    try:
        delta = np.linalg.solve(jac, -residual)
    except np.linalg.LinAlgError:
        return None

    norm0 = float(np.max(np.abs(residual)))
    scale = 1.0
    for _ in range(MAX_BACKTRACKS):
        cu, cv = u + scale * delta[0], v + scale * delta[1]
        if 0.0 <= cu <= 1.0 and 0.0 <= cv <= 1.0:
            try:
                trial = _uv_residual(cycle, f, cu, cv)
                if np.max(np.abs(trial)) < norm0:
                    return f.with_params(u=cu, v=cv), trial
            except LorenzLabError:
                pass
        scale *= 0.5
    return None


def _correct_unstable(
    cycle: RenormalizationCycle,
    f: LorenzMap,
    h: float,
    steps: int = UNSTABLE_STEPS,
) -> LorenzMap:
    """
    Damped 2-D Newton solve of (ũ, ṽ) = (u, v) with backtracking on lost combinatorics.

    f must be renormalizable along the cycle; every accepted step keeps it so.
    """
    residual = _uv_residual(cycle, f, f.u, f.v)
    for _ in range(steps):
        if np.max(np.abs(residual)) < UNSTABLE_FLOOR:
            break
        moved = _unstable_step(cycle, f, residual, h)
        if moved is None:
            break
        f, residual = moved
    return f


def _reseed(cycle: RenormalizationCycle, f: LorenzMap, depth: int) -> LorenzMap:
    """Move (u, v) into the island of the slice through f's c, ρ and coefficients."""
    types = cycle.types * max(1, depth)
    try:
        cell = nested_island_search(
            types,
            SliceConfig.through(f),
            len(types),
            resolution=RESEED_RESOLUTION,
            max_resolution=RESEED_MAX_RESOLUTION,
            refinement_passes=1,
            max_candidates=RESEED_CANDIDATES,
        )
    except LorenzLabError as e:
        raise CombinatoricsLost(
            f"no map of the held slice renormalizes at iteration {cycle.iteration}: {e}",
            {"iteration": cycle.iteration, "type": cycle.types[0].to_list(), "cause": type(e).__name__,
             "map": f.to_dict()},
        ) from e
    u, v = cell.witness
    metrics.increment('fixed_point_reseeds_total')
    logger.info(f"Re-seeded (u, v) = ({u:.12f}, {v:.12f}) on the held slice at iteration {cycle.iteration}")
    return f.with_params(u=u, v=v)


def _advance(cycle: RenormalizationCycle, f: LorenzMap, g: LorenzMap, reseed_depth: int) -> LorenzMap:
    """
    The next iterate after f with cycle image g, renormalizable along the cycle.

    Tried in order: g itself, g with the corrected (u, v) of f, g re-seeded in
    its held slice, then maps damped from f toward g.
    """
    if _try_cycle(cycle, g) is not None:
        return g
    held = g.with_params(u=f.u, v=f.v)
    if _try_cycle(cycle, held) is not None:
        logger.debug(f"Iteration {cycle.iteration}: cycle image left the island; keeping (u, v)")
        return held
    try:
        return _reseed(cycle, g, reseed_depth)
    except CombinatoricsLost:
        logger.warning(f"Iteration {cycle.iteration}: re-seeding failed; damping toward the cycle image")
    x, y = pack(f, cycle.grid_size), pack(g, cycle.grid_size)
    scale = 0.5
    for _ in range(MAX_BACKTRACKS):
        candidate = unpack(x + scale * (y - x), f.rho, cycle.grid_size)
        if _try_cycle(cycle, candidate) is not None:
            return candidate
        scale *= 0.5
    return f


def _newton_refine(
    cycle: RenormalizationCycle,
    f: LorenzMap,
    h: float,
    damping: float,
) -> Tuple[LorenzMap, float]:
    """One damped Newton step on the full coordinate vector."""
    size = cycle.grid_size
    x = pack(f, size)
    fx = pack(cycle(f), size) - x
    jac = np.empty((x.size, x.size))
    for k in range(x.size):
        xk = x.copy()
        xk[k] += h
        try:
            jac[:, k] = (pack(cycle(unpack(xk, f.rho, size)), size) - xk - fx) / h
        except LorenzLabError:
            xk[k] = x[k] - h
            try:
                jac[:, k] = (fx - (pack(cycle(unpack(xk, f.rho, size)), size) - xk)) / h
            except LorenzLabError:
                return f, float(np.max(np.abs(fx)))
    delta = np.linalg.lstsq(jac, -fx, rcond=None)[0]

    base = float(np.max(np.abs(fx)))
    scale = 1.0
    for _ in range(MAX_BACKTRACKS):
        try:
            candidate = unpack(x + scale * delta, f.rho, size)
            residual = map_distance(cycle(candidate), candidate, size)
            if residual < base:
                return candidate, residual
        except LorenzLabError:
            pass
        scale *= damping
    return f, base


def find_fixed_point(
    type_sequence: Sequence,
    seed: LorenzMap,
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    jacobian_step: float = DEFAULT_JACOBIAN_STEP,
    damping: float = DEFAULT_DAMPING,
    plateau_window: int = DEFAULT_PLATEAU_WINDOW,
    step_tol: float = 1e-9,
    grid_size: int = None,
    reseed_depth: int = DEFAULT_RESEED_DEPTH,
) -> FixedPointResult:
    """
    Search for f* with R_{ω_{k−1}} ∘ ... ∘ R_{ω_0}[f*] = f*.

    Every iterate stays renormalizable along the cycle: when the cycle image
    leaves the island of its own (c, φ, ψ) slice, (u, v) is moved back into
    the depth-`reseed_depth` island of that slice before the next correction.

    Args:
        type_sequence: the period of monotone types
        seed: map renormalizable along the cycle, e.g. an island witness
        tol: success threshold on the distance between f and its cycle image
        budget: total iterations over both phases
        reseed_depth: cycle periods the re-seeding island search must survive

    Raises:
        CombinatoricsLost: the seed does not renormalize, or no map of a held slice does
        NoConvergence: budget exhausted; diagnostics carry the distance trace
    """
    types = [MonotoneType.from_value(t) for t in type_sequence]
    if not types:
        raise LorenzDomainError("type sequence must not be empty")
    size = grid_size or seed.grid_size
    cycle = RenormalizationCycle(types, size, step_tol)

    logger.info("=" * 60)
    logger.info(f"Fixed-point search for {' '.join(str(t) for t in types)} (tol={tol:g}, budget={budget})")

    f = seed
    trace: List[float] = []
    phase = "iteration"

    for iteration in range(1, budget + 1):
        cycle.iteration = iteration
        metrics.increment('fixed_point_iterations_total')

        if phase == "iteration":
            f = _correct_unstable(cycle, f, jacobian_step)
            g = cycle(f)
            distance = map_distance(g, f, size)
            trace.append(distance)
            if distance > tol:
                f = _advance(cycle, f, g, reseed_depth)
            window = trace[-plateau_window - 1:]
            if len(window) > plateau_window and window[-1] > 0.9 * window[0]:
                logger.info(f"Distance plateau at iteration {iteration} ({distance:.3e}); switching to Newton")
                phase = "newton"
        else:
            f, distance = _newton_refine(cycle, f, jacobian_step, damping)
            trace.append(distance)

        logger.debug(f"Iteration {iteration} [{phase}]: distance={distance:.3e}")
        if distance <= tol:
            orbit = cycle.orbit(f)[:-1]
            metrics.set_gauge('fixed_point_distance', distance)
            logger.info(f"✓ Converged after {iteration} iterations: distance={distance:.3e}")
            logger.info("=" * 60)
            return FixedPointResult(f, types, distance, iteration, trace, phase, orbit)

    raise NoConvergence(
        f"no periodic point within {budget} iterations (last distance {trace[-1]:.3e})",
        {"trace": trace, "types": [t.to_list() for t in types], "phase": phase},
    )
