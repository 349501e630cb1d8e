"""
Parameter-plane searches over (u, v) slices.

A slice fixes c = c0, ρ and the coefficients (identity unless held from a
given map) and lets (u, v) range over a rectangle. ``scan_slice`` tabulates the
first verified monotone type of every cell; ``nested_island_search`` shrinks a
cell onto the maps that renormalize along a prescribed sequence of types.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage

from combinatorics import (
    DEFAULT_SCAN_CELLS,
    MonotoneType,
    candidate_types,
    detect_monotone,
    kneading,
    required_prefixes,
)
from diffeomorphism import DEFAULT_GRID_SIZE, Diffeomorphism
from error_handler import IslandSearchFailure, LorenzDomainError, LorenzLabError
from lorenz_map import DEFAULT_COLLISION_TOL, LorenzMap, StandardParams
from renormalization import renormalization_step

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 128
DEFAULT_MAX_RESOLUTION = 1024
DEFAULT_REFINEMENT_PASSES = 3
DEFAULT_MAX_CANDIDATES = 400
BOX_PADDING_CELLS = 2
MAX_BOX_GROWTH = 4


@dataclass(frozen=True)
class SliceConfig:
    """The family u, v ↦ (u, v, c0, φ, ψ) at fixed ρ; φ = ψ = id unless held."""
    c0: float
    rho: float
    grid: Tuple[int, int] = (256, 256)
    u_range: Tuple[float, float] = (0.0, 1.0)
    v_range: Tuple[float, float] = (0.0, 1.0)
    grid_size: int = DEFAULT_GRID_SIZE
    phi: Optional[Diffeomorphism] = field(default=None, compare=False, repr=False)
    psi: Optional[Diffeomorphism] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.c0 < 1.0:
            raise LorenzDomainError(f"slice c0 must lie in (0,1), got {self.c0}")
        if not self.rho > 1.0:
            raise LorenzDomainError(f"slice rho must exceed 1, got {self.rho}")
        width, height = self.grid
        if int(width) < 1 or int(height) < 1:
            raise LorenzDomainError(f"slice grid must be positive, got {self.grid}")
        for name in ("u_range", "v_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo < hi <= 1.0:
                raise LorenzDomainError(f"{name} must satisfy 0 <= lo < hi <= 1, got {(lo, hi)}")
        if (self.phi is None) != (self.psi is None):
            raise LorenzDomainError("slice coefficients must be held together")
        object.__setattr__(self, "grid", (int(width), int(height)))

    @classmethod
    def through(cls, f: LorenzMap, **kwargs: Any) -> "SliceConfig":
        """The slice holding f's c, ρ and coefficients."""
        return cls(c0=f.c, rho=f.rho, grid_size=f.grid_size, phi=f.phi, psi=f.psi, **kwargs)

    @property
    def holds_coefficients(self) -> bool:
        return self.phi is not None

    def map_at(self, u: float, v: float) -> LorenzMap:
        if not self.holds_coefficients:
            return LorenzMap.standard(u, v, self.c0, self.rho, self.grid_size)
        return LorenzMap(StandardParams(u, v, self.c0, self.rho), self.phi, self.psi)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c0": self.c0,
            "rho": self.rho,
            "grid": list(self.grid),
            "u_range": list(self.u_range),
            "v_range": list(self.v_range),
            "grid_size": self.grid_size,
            "coefficients": "held" if self.holds_coefficients else "id",
        }


@dataclass
class IslandCell:
    """Rectangle of (u, v) whose maps renormalize along the first `level` types."""
    u_range: Tuple[float, float]
    v_range: Tuple[float, float]
    level: int
    witness: Optional[Tuple[float, float]] = None
    diameters: List[float] = field(default_factory=list)
    survivors: int = 0

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.u_range[1] - self.u_range[0], self.v_range[1] - self.v_range[0]))

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * sum(self.u_range), 0.5 * sum(self.v_range))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "u_range": list(self.u_range),
            "v_range": list(self.v_range),
            "level": self.level,
            "witness": list(self.witness) if self.witness else None,
            "diameter": self.diameter,
            "diameters": list(self.diameters),
            "survivors": self.survivors,
        }


def _through(coefficient: Optional[Diffeomorphism], x: np.ndarray) -> np.ndarray:
    if coefficient is None or coefficient.is_identity:
        return x
    return np.asarray(coefficient(x.ravel()), dtype=float).reshape(x.shape)


def _slice_step(
    x: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    c: float,
    rho: float,
    phi: Optional[Diffeomorphism] = None,
    psi: Optional[Diffeomorphism] = None,
) -> np.ndarray:
    mu = 1.0 - c
    left = x < c
    t_left = np.clip((c - x) / c, 0.0, 1.0)
    t_right = np.clip((x - c) / mu, 0.0, 1.0)
    return np.where(
        left,
        _through(phi, u * (1.0 - t_left ** rho)),
        _through(psi, 1.0 + v * (t_right ** rho - 1.0)),
    )


def kneading_prefix_mask(
    u: np.ndarray,
    v: np.ndarray,
    c: float,
    rho: float,
    prefixes: Tuple[str, str],
    collision_tol: float = DEFAULT_COLLISION_TOL,
    phi: Optional[Diffeomorphism] = None,
    psi: Optional[Diffeomorphism] = None,
) -> np.ndarray:
    """
    Which maps (u, v, c, φ, ψ) have kneading beginning with `prefixes`.

    Both critical orbits of every map in the arrays are followed together;
    a collision with c marks the map as failing. Coefficients default to the
    identity.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    ok = np.ones(np.broadcast(u, v).shape, dtype=bool)
    starts = (_through(phi, np.broadcast_to(u, ok.shape).astype(float)),
              _through(psi, np.broadcast_to(1.0 - v, ok.shape).astype(float)))
    for start, word in zip(starts, prefixes):
        x = start
        for symbol in word[1:]:
            ok &= np.abs(x - c) >= collision_tol
            ok &= (x > c) == (symbol == "1")
            if not ok.any():
                return ok
            x = _slice_step(x, u, v, c, rho, phi, psi)
    return ok


def _renormalizes_along(f: LorenzMap, types: Sequence[MonotoneType]) -> bool:
    try:
        for kind in types:
            f = renormalization_step(f, kind).output
    except LorenzLabError:
        return False
    return True


def _even_subset(indices: np.ndarray, limit: int) -> np.ndarray:
    if indices.size <= limit:
        return indices
    picks = np.linspace(0, indices.size - 1, limit).round().astype(int)
    return indices[np.unique(picks)]


def _cell_centers(lo: float, hi: float, count: int) -> np.ndarray:
    step = (hi - lo) / count
    return lo + step * (np.arange(count) + 0.5)


def _prefix_grid(
    slice_config: SliceConfig,
    types: Sequence[MonotoneType],
    u_range: Tuple[float, float],
    v_range: Tuple[float, float],
    resolution: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    uu, vv = np.meshgrid(
        _cell_centers(*u_range, resolution), _cell_centers(*v_range, resolution), indexing="ij"
    )
    mask = kneading_prefix_mask(
        uu, vv, slice_config.c0, slice_config.rho, required_prefixes(types),
        phi=slice_config.phi, psi=slice_config.psi,
    )
    return uu, vv, mask


def _grow_box(
    mask: np.ndarray,
    u_range: Tuple[float, float],
    v_range: Tuple[float, float],
    slice_config: SliceConfig,
) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """Push out every side the flagged set touches, unless it is a slice edge."""
    width = u_range[1] - u_range[0]
    height = v_range[1] - v_range[0]
    (u_min, u_max), (v_min, v_max) = slice_config.u_range, slice_config.v_range
    u_lo, u_hi = u_range
    v_lo, v_hi = v_range
    if mask[0, :].any() and u_lo > u_min:
        u_lo = max(u_min, u_lo - width)
    if mask[-1, :].any() and u_hi < u_max:
        u_hi = min(u_max, u_hi + width)
    if mask[:, 0].any() and v_lo > v_min:
        v_lo = max(v_min, v_lo - height)
    if mask[:, -1].any() and v_hi < v_max:
        v_hi = min(v_max, v_hi + height)
    return (u_lo, u_hi), (v_lo, v_hi)


def _candidates(mask: np.ndarray, limit: int) -> np.ndarray:
    """Flat indices to verify: an even subset of the interior plus the extremes."""
    flagged = np.flatnonzero(mask.ravel())
    interior = np.flatnonzero(ndimage.binary_erosion(mask).ravel())
    rows, cols = np.unravel_index(flagged, mask.shape)
    extremes = flagged[[np.argmin(rows), np.argmax(rows), np.argmin(cols), np.argmax(cols)]]
    spread = _even_subset(interior if interior.size else flagged, max(1, limit - extremes.size))
    return np.unique(np.concatenate([spread, extremes]))


def _refine_level(
    slice_config: SliceConfig,
    types: Sequence[MonotoneType],
    u_range: Tuple[float, float],
    v_range: Tuple[float, float],
    resolution: int,
    max_candidates: int,
    pool: ThreadPoolExecutor,
):
    """
    One pass: grid the box, prefilter by kneading, verify, bound the flagged set.

    The box grows while flagged points touch one of its inner sides. The new
    box is the extent of every flagged point padded by BOX_PADDING_CELLS, so an
    island is never cut to the part a subsample happened to verify.
    """
    uu, vv, mask = _prefix_grid(slice_config, types, u_range, v_range, resolution)
    for _ in range(MAX_BOX_GROWTH):
        if not mask.any():
            break
        grown = _grow_box(mask, u_range, v_range, slice_config)
        if grown == (u_range, v_range):
            break
        logger.debug(f"Flagged set touches the box; growing to u∈{grown[0]} v∈{grown[1]}")
        u_range, v_range = grown
        uu, vv, mask = _prefix_grid(slice_config, types, u_range, v_range, resolution)
    if not mask.any():
        return None

    chosen = _candidates(mask, max_candidates)
    maps = [slice_config.map_at(float(uu.flat[i]), float(vv.flat[i])) for i in chosen]
    verdicts = list(pool.map(lambda f: _renormalizes_along(f, types), maps))
    good = chosen[np.array(verdicts, dtype=bool)]
    if good.size == 0:
        return None

    pad_u = BOX_PADDING_CELLS * (u_range[1] - u_range[0]) / resolution
    pad_v = BOX_PADDING_CELLS * (v_range[1] - v_range[0]) / resolution
    fu, fv = uu[mask], vv[mask]
    (u_min, u_max), (v_min, v_max) = slice_config.u_range, slice_config.v_range
    new_u = (max(u_min, fu.min() - pad_u), min(u_max, fu.max() + pad_u))
    new_v = (max(v_min, fv.min() - pad_v), min(v_max, fv.max() + pad_v))
    gu, gv = uu.flat[good], vv.flat[good]
    nearest = int(np.argmin(np.hypot(gu - fu.mean(), gv - fv.mean())))
    return new_u, new_v, (float(gu[nearest]), float(gv[nearest])), int(good.size)


def _widened(bounds: Tuple[float, float], limits: Tuple[float, float]) -> Tuple[float, float]:
    width = bounds[1] - bounds[0]
    return max(limits[0], bounds[0] - width), min(limits[1], bounds[1] + width)


def _search_level(
    slice_config: SliceConfig,
    types: Sequence[MonotoneType],
    u_range: Tuple[float, float],
    v_range: Tuple[float, float],
    resolution: int,
    max_resolution: int,
    max_candidates: int,
    pool: ThreadPoolExecutor,
):
    res = resolution
    while res <= max_resolution:
        found = _refine_level(slice_config, types, u_range, v_range, res, max_candidates, pool)
        if found is not None:
            return found, res
        logger.debug(f"Level {len(types)}: nothing at resolution {res}, doubling")
        res *= 2
    return None, res


def nested_island_search(
    type_sequence: Sequence,
    slice_config: SliceConfig,
    depth: int,
    resolution: int = DEFAULT_RESOLUTION,
    max_resolution: int = DEFAULT_MAX_RESOLUTION,
    refinement_passes: int = DEFAULT_REFINEMENT_PASSES,
    max_candidates: int = DEFAULT_MAX_CANDIDATES,
    threads: int = 1,
) -> IslandCell:
    """
    Shrink the slice rectangle onto maps renormalizable along the first `depth` types.

    Each level grids the current cell, keeps the grid points whose kneading
    carries the prefix forced by the types and verifies a deterministic subset
    (interior points and the extremes of the flagged set) by detection and
    renormalization. The cell becomes the padded extent of the flagged set,
    grown while that set touches its sides. When a level flags nothing up to
    `max_resolution`, the search retries once in the cell widened by its own
    size on every side. The witness is the verified point nearest the centroid
    of the flagged set.

    Raises:
        IslandSearchFailure: no verified point at some level
    """
    types = [MonotoneType.from_value(t) for t in type_sequence]
    if depth < 0 or depth > len(types):
        raise LorenzDomainError(f"depth must lie in [0, {len(types)}], got {depth}")

    cell = IslandCell(slice_config.u_range, slice_config.v_range, level=0)
    cell.diameters.append(cell.diameter)
    if depth == 0:
        return cell

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for level in range(1, depth + 1):
            prefix_types = types[:level]
            found, res = _search_level(
                slice_config, prefix_types, cell.u_range, cell.v_range,
                resolution, max_resolution, max_candidates, pool,
            )
            if found is None and level > 1:
                halo_u = _widened(cell.u_range, slice_config.u_range)
                halo_v = _widened(cell.v_range, slice_config.v_range)
                logger.debug(f"Level {level}: retrying in the widened cell u∈{halo_u} v∈{halo_v}")
                found, res = _search_level(
                    slice_config, prefix_types, halo_u, halo_v,
                    resolution, max_resolution, max_candidates, pool,
                )
            if found is None:
                raise IslandSearchFailure(
                    level,
                    diagnostics={
                        "u_range": list(cell.u_range),
                        "v_range": list(cell.v_range),
                        "max_resolution": max_resolution,
                    },
                )

            for _ in range(refinement_passes - 1):
                tighter = _refine_level(
                    slice_config, prefix_types, found[0], found[1], res, max_candidates, pool
                )
                if tighter is None:
                    break
                found = tighter

            u_new, v_new, witness, survivors = found
            cell = IslandCell(u_new, v_new, level, witness, list(cell.diameters), survivors)
            cell.diameters.append(cell.diameter)
            logger.info(
                f"✓ Island level {level}: u∈[{u_new[0]:.9f}, {u_new[1]:.9f}] "
                f"v∈[{v_new[0]:.9f}, {v_new[1]:.9f}] diameter={cell.diameter:.3e}"
            )
    return cell


def _scan_cell(f: LorenzMap, max_return: int, scan_cells: int) -> Tuple[Optional[int], Optional[int]]:
    if not f.is_nontrivial():
        return None, None
    try:
        k = kneading(f, max(16, 2 * max_return + 4))
    except LorenzLabError:
        return None, None
    for kind in candidate_types(k, max_return):
        try:
            detect_monotone(f, kind.n, kind.m, scan_cells=scan_cells)
        except LorenzLabError:
            continue
        return kind.n, kind.m
    return None, None


def scan_slice(
    slice_config: SliceConfig,
    max_return: int = 8,
    threads: int = 1,
    scan_cells: int = DEFAULT_SCAN_CELLS,
) -> pd.DataFrame:
    """
    First verified monotone type (ordered by n + m) of every grid cell.

    Rows are processed in parallel and reassembled in index order, so the
    table does not depend on the thread count.
    """
    width, height = slice_config.grid
    us = _cell_centers(*slice_config.u_range, width)
    vs = _cell_centers(*slice_config.v_range, height)

    def scan_row(i: int) -> List[Dict[str, Any]]:
        rows = []
        for j, v in enumerate(vs):
            f = slice_config.map_at(float(us[i]), float(v))
            n, m = _scan_cell(f, max_return, scan_cells)
            rows.append({
                "i": i, "j": j, "u": float(us[i]), "v": float(v),
                "nontrivial": f.is_nontrivial(), "n": n, "m": m,
            })
        return rows

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        chunks = list(pool.map(scan_row, range(width)))

    frame = pd.DataFrame([row for chunk in chunks for row in chunk])
    frame["n"] = frame["n"].astype("Int64")
    frame["m"] = frame["m"].astype("Int64")
    found = int(frame["n"].notna().sum())
    logger.info(f"✓ Scan {width}x{height}: {found} cells with a verified type")
    return frame
