"""
The Cantor attractor of an infinitely renormalizable Lorenz map, at finite depth.

Λ_k is the union of the closures of f^i(L_k), 0 ≤ i < i_k, and f^j(R_k),
0 ≤ j < j_k, where C_k = L_k ∪ R_k is the k-th renormalization window pulled
back to the original coordinates and (i_k, j_k) are its return times.
Components of Λ_k are the intervals of generation k; components of
Λ_{k−1} \\ Λ_k are its gaps.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.stats import linregress

from combinatorics import MonotoneType, detect_monotone
from error_handler import InsufficientData, LorenzDomainError, LorenzLabError, NiceIntervalError
from lorenz_map import DEFAULT_COLLISION_TOL, Interval, LorenzMap
from renormalization import renormalization_step

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-12
CLOSURE_TOL = 1e-10


@dataclass
class GenerationFamily:
    """Intervals and gaps of one generation."""
    level: int
    intervals: List[Interval]
    gaps: List[Interval] = field(default_factory=list)
    return_times: Tuple[int, int] = (0, 0)
    window: Optional[Interval] = None
    pieces: int = 1
    note: str = ""

    @property
    def total_length(self) -> float:
        return float(sum(iv.length for iv in self.intervals))

    @property
    def count(self) -> int:
        return len(self.intervals)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for iv in self.intervals:
            inside |= iv.contains(x, MERGE_TOL)
        return inside

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "intervals": [iv.to_list() for iv in self.intervals],
            "gaps": [iv.to_list() for iv in self.gaps],
            "total_length": self.total_length,
            "return_times": list(self.return_times),
            "window": self.window.to_list() if self.window else None,
            "pieces": self.pieces,
            "note": self.note,
        }


@dataclass(frozen=True)
class TransferSample:
    """Transfer time of one start point; tau is None when the orbit escaped the cap."""
    x: float
    tau: Optional[int]
    cap: int

    @property
    def escaped(self) -> bool:
        return self.tau is None

    def to_dict(self) -> Dict[str, Any]:
        return {"x": self.x, "tau": self.tau if self.tau is not None else f"ESCAPE({self.cap})"}


@dataclass
class EmpiricalMeasure:
    """Visit histograms of the two critical orbits."""
    edges: np.ndarray
    minus: np.ndarray
    plus: np.ndarray
    samples: int
    restarts: int
    birkhoff_spread: float

    @property
    def tv_distance(self) -> float:
        return float(0.5 * np.abs(self.minus - self.plus).sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "edges": self.edges.tolist(),
            "minus": self.minus.tolist(),
            "plus": self.plus.tolist(),
            "samples": self.samples,
            "restarts": self.restarts,
            "tv_distance": self.tv_distance,
            "birkhoff_spread": self.birkhoff_spread,
        }


def _merge(pieces: Sequence[Tuple[float, float]]) -> List[Interval]:
    ordered = sorted((min(a, b), max(a, b)) for a, b in pieces)
    merged: List[List[float]] = []
    for lo, hi in ordered:
        if merged and lo <= merged[-1][1] + MERGE_TOL:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [Interval(max(lo, 0.0), min(hi, 1.0)) for lo, hi in merged]


def _gaps(parent: Sequence[Interval], children: Sequence[Interval]) -> List[Interval]:
    gaps = []
    for outer in parent:
        inside = [iv for iv in children if outer.contains_interval(iv, MERGE_TOL)]
        cursor = outer.lo
        for iv in inside:
            if iv.lo > cursor + MERGE_TOL:
                gaps.append(Interval(cursor, iv.lo))
            cursor = max(cursor, iv.hi)
        if outer.hi > cursor + MERGE_TOL:
            gaps.append(Interval(cursor, outer.hi))
    return gaps


def _polish(f: LorenzMap, estimate: float, period: int, width: float, lo_limit: float, hi_limit: float) -> float:
    """Refine a periodic point of period `period` near `estimate`."""
    def g(x: float) -> float:
        return float(f.iterate(x, period)) - x

    half = 1e-8 * width
    for _ in range(12):
        a, b = max(estimate - half, lo_limit), min(estimate + half, hi_limit)
        if a < b and g(a) * g(b) < 0:
            return float(brentq(g, a, b, xtol=1e-15, maxiter=200))
        half *= 4.0
    return estimate


def _orbit_pieces(f: LorenzMap, p: float, q: float, i_k: int, j_k: int) -> List[Tuple[float, float]]:
    pieces = [(p, f.c), (f.c, q)]
    x, crit = p, f.c1_minus
    for _ in range(1, i_k):
        x = float(f.step(x))
        pieces.append((x, crit))
        crit = float(f.step(crit))
    y, crit = q, f.c1_plus
    for _ in range(1, j_k):
        y = float(f.step(y))
        pieces.append((crit, y))
        crit = float(f.step(crit))
    return pieces


def generations(f: LorenzMap, type_sequence: Sequence, depth: int) -> List[GenerationFamily]:
    """
    Generation families Λ_0, ..., Λ_depth along the given types.

    If detection fails at level k the families up to k−1 are returned and the
    last one carries the failure in its note.
    """
    types = [MonotoneType.from_value(t) for t in type_sequence]
    if depth < 0 or depth > len(types):
        raise LorenzDomainError(f"depth must lie in [0, {len(types)}], got {depth}")

    families = [GenerationFamily(0, [Interval(0.0, 1.0)], return_times=(1, 1))]
    current = f
    offset, scale = 0.0, 1.0
    i_k, j_k = 1, 1

    for level in range(1, depth + 1):
        kind = types[level - 1]
        try:
            data = detect_monotone(current, kind.n, kind.m)
            step = renormalization_step(current, data)
        except LorenzLabError as e:
            families[-1].note = f"detection failed at level {level}: {type(e).__name__}: {e}"
            logger.warning(f"Generations stop at level {level - 1}: {e}")
            break

        i_k, j_k = i_k + kind.n * j_k, j_k + kind.m * i_k
        p_est, q_est = offset + scale * data.p, offset + scale * data.q
        width = q_est - p_est
        p = _polish(f, p_est, i_k, width, 0.0, f.c)
        q = _polish(f, q_est, j_k, width, f.c, 1.0)

        children = _merge(_orbit_pieces(f, p, q, i_k, j_k))
        family = GenerationFamily(
            level=level,
            intervals=children,
            gaps=_gaps(families[-1].intervals, children),
            return_times=(i_k, j_k),
            window=Interval(p, q),
            pieces=i_k + j_k,
        )
        families.append(family)
        logger.debug(
            f"Generation {level}: {family.count} intervals, total length {family.total_length:.6e}"
        )

        offset, scale = p_est, width
        current = step.output
    return families


def ratio_stats(fam: GenerationFamily, parent: GenerationFamily) -> Tuple[float, float, float, float]:
    """Extremal |J|/|I| over children J ⊂ I and |G|/|I| over gaps G ⊂ I."""
    ratios, gap_ratios = [], []
    for outer in parent.intervals:
        if outer.length <= 0:
            continue
        ratios.extend(iv.length / outer.length for iv in fam.intervals if outer.contains_interval(iv, MERGE_TOL))
        gap_ratios.extend(g.length / outer.length for g in fam.gaps if outer.contains_interval(g, MERGE_TOL))
    nan = float("nan")
    return (
        min(ratios) if ratios else nan,
        max(ratios) if ratios else nan,
        min(gap_ratios) if gap_ratios else nan,
        max(gap_ratios) if gap_ratios else nan,
    )


def box_dimension(fams: Sequence[GenerationFamily]) -> Tuple[float, float]:
    """
    Box-counting slope of log(count) against log(1/scale) across generations.

    Each generation is covered by its own intervals at the scale of the
    largest one.

    Raises:
        InsufficientData: fewer than three generations or no subdivision
    """
    if len(fams) < 3:
        raise InsufficientData(
            f"box dimension needs at least 3 generations, got {len(fams)}", {"levels": len(fams)}
        )
    counts = np.array([fam.count for fam in fams], dtype=float)
    scales = np.array([max(iv.length for iv in fam.intervals) for fam in fams], dtype=float)
    if np.all(counts == counts[0]) or np.any(scales <= 0):
        raise InsufficientData("generations do not subdivide", {"counts": counts.tolist()})
    fit = linregress(np.log(1.0 / scales), np.log(counts))
    return float(fit.slope), float(fit.stderr)


def middle_thirds_families(depth: int) -> List[GenerationFamily]:
    """Generations of the middle-thirds Cantor set, for calibrating box_dimension."""
    families = [GenerationFamily(0, [Interval(0.0, 1.0)])]
    for level in range(1, depth + 1):
        children = []
        for iv in families[-1].intervals:
            third = iv.length / 3.0
            children.append(Interval(iv.lo, iv.lo + third))
            children.append(Interval(iv.hi - third, iv.hi))
        families.append(GenerationFamily(level, children, _gaps(families[-1].intervals, children)))
    return families


def orbit_samples(f: LorenzMap, x0: float, burn: int, count: int) -> np.ndarray:
    """count points of the orbit of x0 after burn steps."""
    x = float(x0)
    for _ in range(burn):
        x = float(f.step(x))
    out = np.empty(count)
    for k in range(count):
        out[k] = x
        x = float(f.step(x))
    return out


def empirical_measure(
    f: LorenzMap,
    burn: int,
    samples: int,
    bins: int,
    walkers: int = 64,
    seed: int = 0,
    jitter: float = 1e-9,
    collision_tol: float = DEFAULT_COLLISION_TOL,
) -> EmpiricalMeasure:
    """
    Normalized visit histograms of orbits started next to c₁⁻ and c₁⁺.

    Each side runs `walkers` orbits in lockstep from jittered starts; a walker
    that comes within collision_tol of c is restarted with fresh jitter.
    """
    if not f.is_nontrivial():
        raise LorenzDomainError("empirical measure needs a nontrivial map")
    if samples < 1 or bins < 1 or walkers < 1:
        raise LorenzDomainError("samples, bins and walkers must be positive")
    rng = np.random.default_rng(seed)
    edges = np.linspace(0.0, 1.0, bins + 1)
    steps = math.ceil(samples / walkers)
    restarts = 0
    histograms, means = [], []

    for start in (f.c1_minus, f.c1_plus):
        def fresh(size: int) -> np.ndarray:
            return np.clip(start + jitter * rng.standard_normal(size), 0.0, 1.0)

        x = fresh(walkers)
        counts = np.zeros(bins)
        sums = np.zeros(walkers)
        for k in range(burn + steps):
            hit = np.abs(x - f.c) < collision_tol
            if hit.any():
                restarts += int(hit.sum())
                x[hit] = fresh(int(hit.sum()))
            if k >= burn:
                counts += np.histogram(x, bins=edges)[0]
                sums += x
            x = np.asarray(f.step(x))
        histograms.append(counts / counts.sum())
        means.append(sums / steps)

    if restarts:
        logger.info(f"Empirical measure: {restarts} walkers restarted after critical collisions")
    walker_means = np.concatenate(means)
    return EmpiricalMeasure(
        edges=edges,
        minus=histograms[0],
        plus=histograms[1],
        samples=steps * walkers,
        restarts=restarts,
        birkhoff_spread=float(walker_means.max() - walker_means.min()),
    )


def is_nice(f: LorenzMap, window: Interval, cap: int) -> bool:
    """
    Whether the boundary orbit of the open window stays out of it.

    An endpoint is certified when its orbit closes up on itself; otherwise it
    is followed for `cap` steps.
    """
    if not window.lo < f.c < window.hi:
        return False
    for a in (window.lo, window.hi):
        x = a
        for _ in range(cap):
            x = float(f.step(x))
            if abs(x - a) <= CLOSURE_TOL or abs(x - window.lo) <= CLOSURE_TOL or abs(x - window.hi) <= CLOSURE_TOL:
                break
            if window.lo < x < window.hi:
                return False
    return True


def transfer_times(f: LorenzMap, window: Interval, starts, cap: int) -> List[TransferSample]:
    """
    Smallest k ≥ 0 with f^k(x) in the open window, for every start.

    Raises:
        NiceIntervalError: the window is not nice
    """
    if not is_nice(f, window, cap):
        raise NiceIntervalError(
            f"window [{window.lo}, {window.hi}] is not nice", {"window": window.to_list(), "cap": cap}
        )
    xs = np.asarray(starts, dtype=float).ravel()
    x = xs.copy()
    tau = np.full(xs.size, -1, dtype=int)
    active = np.ones(xs.size, dtype=bool)
    for k in range(cap + 1):
        inside = active & (x > window.lo) & (x < window.hi)
        tau[inside] = k
        active &= ~inside
        if not active.any() or k == cap:
            break
        x[active] = np.asarray(f.step(x[active]))
    escaped = int(np.count_nonzero(tau < 0))
    if escaped:
        logger.info(f"Transfer times: {escaped}/{xs.size} starts escaped the cap {cap}")
    return [
        TransferSample(float(x0), int(t) if t >= 0 else None, cap)
        for x0, t in zip(xs, tau)
    ]
