"""
Itineraries, kneading invariants and detection of monotone renormalization.

Symbols are 0 left of c and 1 right of c; words are compared
lexicographically by first difference (0 < 1). A map is renormalizable of
monotone type (n, m) when the first return map to a window C = [p, q] around c
is f^{n+1} on L = [p, c) with itinerary 0 1^n, f^{m+1} on R = (c, q] with
itinerary 1 0^m, and rescales to a nontrivial Lorenz map.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from error_handler import CriticalCollision, LorenzDomainError, NotRenormalizable
from lorenz_map import DEFAULT_COLLISION_TOL, Interval, LorenzMap
from metrics_collector import metrics

logger = logging.getLogger(__name__)

DEFAULT_SCAN_CELLS = 4096
DEFAULT_ROOT_TOL = 1e-15
PERIODICITY_TOL = 1e-10
# geometric refinement points placed between the uniform scan and c
_REFINE_POINTS = 96


@dataclass(frozen=True)
class Word:
    """Finite word over {0,1}."""
    symbols: str

    def __post_init__(self):
        symbols = str(self.symbols)
        if symbols.strip("01"):
            raise LorenzDomainError(f"words use only the symbols 0 and 1, got {symbols!r}")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def __getitem__(self, index):
        return self.symbols[index]

    def __str__(self) -> str:
        return self.symbols

    def shift(self, n: int = 1) -> "Word":
        """σⁿ."""
        return Word(self.symbols[n:])

    def compare(self, other: "Word") -> int:
        """-1, 0 or 1 by first difference; a prefix compares equal."""
        for a, b in zip(self.symbols, other.symbols):
            if a != b:
                return -1 if a < b else 1
        return 0

    def __le__(self, other: "Word") -> bool:
        return self.compare(other) <= 0

    def __ge__(self, other: "Word") -> bool:
        return self.compare(other) >= 0

    def __lt__(self, other: "Word") -> bool:
        return self.compare(other) < 0

    def __gt__(self, other: "Word") -> bool:
        return self.compare(other) > 0

    def leading_run(self, symbol: str, start: int = 1) -> int:
        """Length of the run of `symbol` beginning at `start`."""
        run = 0
        for s in self.symbols[start:]:
            if s != symbol:
                break
            run += 1
        return run


@dataclass(frozen=True)
class KneadingInvariant:
    """(K⁻, K⁺) = (ω(c⁻), ω(c⁺)) to a finite depth."""
    k_minus: Word
    k_plus: Word
    depth: int

    def to_dict(self) -> Dict[str, Any]:
        return {"k_minus": str(self.k_minus), "k_plus": str(self.k_plus), "depth": self.depth}


@dataclass(frozen=True)
class MonotoneType:
    """Monotone combinatorics ω = (0 1ⁿ, 1 0ᵐ)."""
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) < 1 or int(self.m) < 1:
            raise LorenzDomainError(f"return exponents must be >= 1, got ({self.n}, {self.m})")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    @property
    def omega_minus(self) -> Word:
        return Word("0" + "1" * self.n)

    @property
    def omega_plus(self) -> Word:
        return Word("1" + "0" * self.m)

    def substitute(self, word: str) -> str:
        """Replace 0 by ω⁻ and 1 by ω⁺."""
        minus, plus = str(self.omega_minus), str(self.omega_plus)
        return "".join(minus if s == "0" else plus for s in word)

    def in_class(self, n_min: int, m_min: int) -> bool:
        return self.n >= n_min and self.m >= m_min

    def to_list(self) -> List[int]:
        return [self.n, self.m]

    @classmethod
    def from_value(cls, value) -> "MonotoneType":
        if isinstance(value, MonotoneType):
            return value
        n, m = value
        return cls(int(n), int(m))

    def __str__(self) -> str:
        return f"({self.omega_minus},{self.omega_plus})"


def required_prefixes(types: Sequence[MonotoneType]) -> Tuple[str, str]:
    """
    Kneading prefixes forced by renormalizing along `types` to a nontrivial map.

    K(f) is the substitution of K(R[f]) by the first type, and the last
    renormalization is nontrivial, so its kneading begins (01, 10).
    """
    minus, plus = "01", "10"
    for t in reversed(list(types)):
        minus, plus = t.substitute(minus), t.substitute(plus)
    return minus, plus


@dataclass
class RenormalizationData:
    """Certificate of one renormalization step."""
    p: float
    q: float
    c: float
    type: MonotoneType
    left_orbit: List[Interval]
    right_orbit: List[Interval]
    return_values: Tuple[float, float]
    left_roots: List[float] = field(default_factory=list)
    right_roots: List[float] = field(default_factory=list)

    @property
    def C(self) -> Interval:
        return Interval(self.p, self.q)

    @property
    def L(self) -> Interval:
        return Interval(self.p, self.c)

    @property
    def R(self) -> Interval:
        return Interval(self.c, self.q)

    @property
    def scaled_critical_point(self) -> float:
        return (self.c - self.p) / (self.q - self.p)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "type": self.type.to_list(),
            "words": [str(self.type.omega_minus), str(self.type.omega_plus)],
            "p": self.p,
            "q": self.q,
            "c": self.c,
            "C": self.C.to_list(),
            "L": self.L.to_list(),
            "R": self.R.to_list(),
            "left_orbit": [iv.to_list() for iv in self.left_orbit],
            "right_orbit": [iv.to_list() for iv in self.right_orbit],
            "return_values": list(self.return_values),
            "left_roots": list(self.left_roots),
            "right_roots": list(self.right_roots),
        }


def itinerary(f: LorenzMap, x: float, depth: int, collision_tol: float = DEFAULT_COLLISION_TOL) -> Word:
    """Symbols of x, f(x), ..., f^{depth-1}(x)."""
    if depth < 1:
        raise LorenzDomainError(f"itinerary depth must be positive, got {depth}")
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise LorenzDomainError(f"point outside [0,1]: {x}")
    symbols = []
    for i in range(depth):
        if abs(x - f.c) < collision_tol:
            raise CriticalCollision(step=i, point=x)
        symbols.append("1" if x > f.c else "0")
        if i + 1 < depth:
            x = float(f.step(x))
    return Word("".join(symbols))


def kneading(f: LorenzMap, depth: int, collision_tol: float = DEFAULT_COLLISION_TOL) -> KneadingInvariant:
    """K⁻ = 0 ω(c₁⁻), K⁺ = 1 ω(c₁⁺), each of length `depth`."""
    if depth < 2:
        raise LorenzDomainError(f"kneading depth must be at least 2, got {depth}")
    minus = _side_itinerary(f, f.c1_minus, depth - 1, "-", collision_tol)
    plus = _side_itinerary(f, f.c1_plus, depth - 1, "+", collision_tol)
    return KneadingInvariant(Word("0" + str(minus)), Word("1" + str(plus)), depth)


def _side_itinerary(f: LorenzMap, x: float, depth: int, side: str, tol: float) -> Word:
    try:
        return itinerary(f, x, depth, tol)
    except CriticalCollision as e:
        raise CriticalCollision(step=e.step + 1, point=e.point, side=side) from e


def admissible(k: KneadingInvariant) -> bool:
    """
    K₀⁻ = 0, K₀⁺ = 1 and every shift respects the order of the branches.

    A shift beginning with 0 is the itinerary of a point left of c and cannot
    exceed K⁻; one beginning with 1 cannot be below K⁺. When both words start
    nontrivially (01..., 10...) the sandwich σ(K⁺) ≤ σⁿ(K±) ≤ σ(K⁻) is also
    required.
    """
    minus, plus = k.k_minus, k.k_plus
    if len(minus) < 2 or len(plus) < 2:
        return False
    if minus[0] != "0" or plus[0] != "1":
        return False
    nontrivial = minus[1] == "1" and plus[1] == "0"
    low, high = plus.shift(1), minus.shift(1)
    for word in (minus, plus):
        for n in range(1, len(word)):
            shifted = word.shift(n)
            if shifted[0] == "0" and shifted > minus:
                return False
            if shifted[0] == "1" and shifted < plus:
                return False
            if nontrivial and not (low <= shifted <= high):
                return False
    return True


def candidate_types(k: KneadingInvariant, max_return: int) -> List[MonotoneType]:
    """
    Monotone types compatible with the kneading prefixes, ordered by n + m.

    A type (n, m) forces K⁻ to begin 0 1^{n+1} and K⁺ to begin 1 0^{m+1}.
    """
    if str(k.k_minus)[:2] != "01" or str(k.k_plus)[:2] != "10":
        return []
    run_minus = k.k_minus.leading_run("1")
    run_plus = k.k_plus.leading_run("0")
    n_max = max_return if run_minus >= len(k.k_minus) - 1 else min(max_return, run_minus - 1)
    m_max = max_return if run_plus >= len(k.k_plus) - 1 else min(max_return, run_plus - 1)
    found = [MonotoneType(n, m) for n in range(1, n_max + 1) for m in range(1, m_max + 1)]
    return sorted(found, key=lambda t: (t.n + t.m, t.n))


def detect_monotone(
    f: LorenzMap,
    n: int,
    m: int,
    scan_cells: int = DEFAULT_SCAN_CELLS,
    collision_tol: float = DEFAULT_COLLISION_TOL,
    root_tol: float = DEFAULT_ROOT_TOL,
) -> RenormalizationData:
    """
    Find the maximal window C = [p, q] of monotone type (n, m).

    p ranges over roots of f₁ⁿ(f₀(p)) − p on (0, c) with itinerary 0 1ⁿ and q
    over roots of f₀ᵐ(f₁(q)) − q on (c, 1) with itinerary 1 0ᵐ; the smallest p
    and largest q whose window passes verification are returned.

    Raises:
        NotRenormalizable: no window passes verification
    """
    start = time.time()
    metrics.increment('detections_total')
    kind = MonotoneType(n, m)

    if not f.is_nontrivial():
        metrics.increment('detections_failed')
        raise NotRenormalizable(
            "map is trivial (c1+ < c < c1- fails)",
            {"first_failed_invariant": "nontrivial map",
             "c1_minus": f.c1_minus, "c1_plus": f.c1_plus, "c": f.c},
        )

    left_roots = _periodic_roots(f, str(kind.omega_minus), "left", scan_cells, collision_tol, root_tol)
    right_roots = _periodic_roots(f, str(kind.omega_plus), "right", scan_cells, collision_tol, root_tol)

    failures: List[str] = []
    for p in left_roots:
        for q in reversed(right_roots):
            data, failure = _verify_window(f, kind, p, q, collision_tol)
            if data is not None:
                data.left_roots = list(left_roots)
                data.right_roots = list(right_roots)
                metrics.record_duration('detect_seconds', time.time() - start)
                logger.debug(f"Detected type {kind}: p={p!r}, q={q!r}")
                return data
            failures.append(failure)

    metrics.increment('detections_failed')
    first = failures[0] if failures else (
        "no left periodic root" if not left_roots else "no right periodic root"
    )
    raise NotRenormalizable(
        f"no verified window of type {kind}",
        {"type": kind.to_list(), "left_roots": left_roots, "right_roots": right_roots,
         "first_failed_invariant": first},
    )


def _scan_points(f: LorenzMap, side: str, cells: int) -> np.ndarray:
    """Uniform scan of one side of c, refined geometrically toward c."""
    c = f.c
    offsets = np.geomspace(1e-14, 1.0, _REFINE_POINTS)
    if side == "left":
        uniform = np.linspace(0.0, c, cells + 1)[:-1]
        refined = c - c * offsets / cells
        points = np.concatenate([uniform, refined])
    else:
        uniform = np.linspace(c, 1.0, cells + 1)[1:]
        refined = c + (1.0 - c) * offsets / cells
        points = np.concatenate([refined, uniform])
    points = np.unique(points)
    return points[points != c]


def _orbit_symbols(f: LorenzMap, xs: np.ndarray, steps: int, tol: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symbol rows of x, ..., f^{steps-1}(x), the image f^{steps}(x) and a collision mask."""
    x = xs.astype(float).copy()
    symbols = np.empty((steps, x.size), dtype=np.int8)
    collided = np.zeros(x.size, dtype=bool)
    for i in range(steps):
        collided |= np.abs(x - f.c) < tol
        symbols[i] = x > f.c
        x = np.asarray(f.step(x))
    return symbols, x, collided


def _periodic_roots(f: LorenzMap, word: str, side: str, cells: int, tol: float, root_tol: float) -> List[float]:
    steps = len(word)
    pattern = np.array([int(s) for s in word], dtype=np.int8)[:, None]
    xs = _scan_points(f, side, cells)
    symbols, image, collided = _orbit_symbols(f, xs, steps, tol)
    valid = ~collided & np.all(symbols == pattern, axis=0)
    g = image - xs

    def displacement(x: float) -> float:
        return float(f.iterate(x, steps)) - x

    roots: List[float] = []
    exact = np.flatnonzero(valid & (g == 0.0))
    roots.extend(float(xs[i]) for i in exact)
    brackets = np.flatnonzero(valid[:-1] & valid[1:] & (g[:-1] * g[1:] < 0.0))
    for i in brackets:
        roots.append(float(brentq(displacement, xs[i], xs[i + 1], xtol=root_tol, maxiter=200)))

    roots.sort()
    unique: List[float] = []
    for r in roots:
        if not unique or r - unique[-1] > 1e-12:
            unique.append(r)
    return unique


def _verify_window(
    f: LorenzMap, kind: MonotoneType, p: float, q: float, tol: float
) -> Tuple[Optional[RenormalizationData], str]:
    """Check every invariant of a candidate window; report the first failure."""
    c = f.c
    n, m = kind.n, kind.m
    if not p < c < q:
        return None, "p < c < q"

    p_orbit = [p]
    for _ in range(n + 1):
        p_orbit.append(float(f.step(p_orbit[-1])))
    q_orbit = [q]
    for _ in range(m + 1):
        q_orbit.append(float(f.step(q_orbit[-1])))
    if abs(p_orbit[-1] - p) > PERIODICITY_TOL or abs(q_orbit[-1] - q) > PERIODICITY_TOL:
        return None, "endpoint periodicity"

    crit_minus = [f.c1_minus]
    for _ in range(n):
        crit_minus.append(float(f.step(crit_minus[-1])))
    crit_plus = [f.c1_plus]
    for _ in range(m):
        crit_plus.append(float(f.step(crit_plus[-1])))

    for i in range(1, n + 1):
        if not p_orbit[i] > q:
            return None, f"left orbit interval {i} meets C or crosses c"
        if abs(crit_minus[i - 1] - c) < tol:
            return None, "critical collision on the left orbit"
    for j in range(1, m + 1):
        if not q_orbit[j] < p:
            return None, f"right orbit interval {j} meets C or crosses c"
        if abs(crit_plus[j - 1] - c) < tol:
            return None, "critical collision on the right orbit"

    return_minus, return_plus = crit_minus[n], crit_plus[m]
    slack = 1e-12
    if not c < return_minus <= q + slack:
        return None, "left return c_{n+1}- lies in (c, q]"
    if not p - slack <= return_plus < c:
        return None, "right return c_{m+1}+ lies in [p, c)"

    left_orbit = [Interval(p_orbit[i], min(crit_minus[i - 1], 1.0)) for i in range(1, n + 1)]
    left_orbit.append(Interval(p, min(return_minus, q)))
    right_orbit = [Interval(max(crit_plus[j - 1], 0.0), q_orbit[j]) for j in range(1, m + 1)]
    right_orbit.append(Interval(max(return_plus, p), q))

    if not _pairwise_disjoint(left_orbit[:-1]):
        return None, "left orbit intervals pairwise disjoint"
    if not _pairwise_disjoint(right_orbit[:-1]):
        return None, "right orbit intervals pairwise disjoint"

    data = RenormalizationData(
        p=p, q=q, c=c, type=kind,
        left_orbit=left_orbit, right_orbit=right_orbit,
        return_values=(return_minus, return_plus),
    )
    return data, ""


def _pairwise_disjoint(intervals: Sequence[Interval]) -> bool:
    ordered = sorted(intervals, key=lambda iv: iv.lo)
    return all(a.hi < b.lo for a, b in zip(ordered, ordered[1:]))
