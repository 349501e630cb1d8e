"""
A-priori bounds for renormalizable Lorenz maps, measured against the maps.

Every explicit bound on the renormalization window and critical values is
evaluated by substitution and paired with the quantity it bounds, so a corpus
of detected maps can be checked inequality by inequality. A bound is only
asserted when its hypotheses hold for the map (distortion budget, κ < 1,
2π < ln ρ); otherwise it is reported for information.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from combinatorics import RenormalizationData, detect_monotone
from diffeomorphism import distortion, koebe_bounds
from error_handler import DegenerateMapError, LorenzDomainError
from lorenz_map import LorenzMap, inverse_branch
from renormalization import DEFAULT_STEP_TOL, deformation_retract, renormalization_step

logger = logging.getLogger(__name__)

DEFAULT_K = 1.0
DEFAULT_K_VALUES = (0.5, 1.0, 2.0)
DEFAULT_SLACK = 1e-12


@dataclass(frozen=True)
class BoundsConstants:
    """Constants built from (ρ, c, c₁±) and a distortion budget π."""
    alpha: float
    eta: float
    kappa: float
    gamma: float
    nu: float
    xi: float
    pi: float
    rho: float
    c: float
    mu: float
    c1_minus: float
    c1_plus: float

    @property
    def contracting(self) -> bool:
        """γ < 1, equivalently 2π < ln ρ."""
        return self.gamma < 1.0

    def to_dict(self) -> Dict[str, float]:
        return {
            "alpha": self.alpha, "eta": self.eta, "kappa": self.kappa,
            "gamma": self.gamma, "nu": self.nu, "xi": self.xi, "pi": self.pi,
            "rho": self.rho, "c": self.c, "mu": self.mu,
            "c1_minus": self.c1_minus, "c1_plus": self.c1_plus,
        }


@dataclass(frozen=True)
class BoundCheck:
    """One inequality: `bound` ≤ `measured` (lower) or `measured` ≤ `bound` (upper)."""
    name: str
    kind: str
    bound: Optional[float]
    measured: float
    applicable: bool
    slack: float = DEFAULT_SLACK

    @property
    def holds(self) -> Optional[bool]:
        if self.bound is None or not math.isfinite(self.bound):
            return None
        if self.kind == "lower":
            return self.bound <= self.measured + self.slack
        return self.measured <= self.bound + self.slack

    @property
    def violated(self) -> bool:
        """Asserted and failed."""
        return self.applicable and self.holds is False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name, "kind": self.kind, "bound": self.bound,
            "measured": self.measured, "applicable": self.applicable,
            "holds": self.holds, "slack": self.slack,
        }


@dataclass
class InvarianceReport:
    """Whether one renormalization keeps the map inside the compact class."""
    applicable: bool
    n: int
    m: int
    pi: float
    eps: float
    reason: str = ""
    dist_phi: Optional[float] = None
    dist_psi: Optional[float] = None
    c_tilde: Optional[float] = None
    distortion_invariant: Optional[bool] = None
    critical_point_invariant: Optional[bool] = None
    koebe: Dict[str, float] = field(default_factory=dict)
    b1: Optional[float] = None
    b1_dominates_distortion: Optional[bool] = None
    b1_below_exp_half_pi: Optional[bool] = None
    b1_below_exp_pi: Optional[bool] = None

    @property
    def invariant(self) -> bool:
        return bool(self.applicable and self.distortion_invariant and self.critical_point_invariant)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "applicable": self.applicable, "reason": self.reason,
            "n": self.n, "m": self.m, "pi": self.pi, "eps": self.eps,
            "dist_phi": self.dist_phi, "dist_psi": self.dist_psi, "c_tilde": self.c_tilde,
            "distortion_invariant": self.distortion_invariant,
            "critical_point_invariant": self.critical_point_invariant,
            "invariant": self.invariant, "koebe": dict(self.koebe), "b1": self.b1,
            "b1_dominates_distortion": self.b1_dominates_distortion,
            "b1_below_exp_half_pi": self.b1_below_exp_half_pi,
            "b1_below_exp_pi": self.b1_below_exp_pi,
        }


@dataclass
class BoundsReport:
    """Every bound for one (n, m)-renormalizable map with its measured counterpart."""
    constants: BoundsConstants
    n: int
    m: int
    K: float
    delta: float
    theta: float
    measured: Dict[str, float]
    checks: List[BoundCheck]
    hypotheses: Dict[str, bool]
    k_sensitivity: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def violations(self) -> List[BoundCheck]:
        return [check for check in self.checks if check.violated]

    def check(self, name: str) -> BoundCheck:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "constants": self.constants.to_dict(),
            "n": self.n, "m": self.m, "K": self.K,
            "delta": self.delta, "theta": self.theta,
            "measured": dict(self.measured),
            "checks": [check.to_dict() for check in self.checks],
            "hypotheses": dict(self.hypotheses),
            "k_sensitivity": self.k_sensitivity,
            "violations": [check.name for check in self.violations],
        }

    def to_row(self) -> Dict[str, Any]:
        """Flat form for one CSV row per map."""
        row: Dict[str, Any] = {"n": self.n, "m": self.m, "K": self.K,
                               "delta": self.delta, "theta": self.theta}
        row.update({f"const_{k}": v for k, v in self.constants.to_dict().items()})
        row.update({f"measured_{k}": v for k, v in self.measured.items()})
        for check in self.checks:
            row[f"{check.name}_bound"] = check.bound
            row[f"{check.name}_holds"] = check.holds
        row["violations"] = len(self.violations)
        return row


def default_pi(f: LorenzMap) -> float:
    """max(dist φ, dist ψ) rounded up to 3 decimals, at least 0.001."""
    budget = max(distortion(f.phi), distortion(f.psi))
    return max(math.ceil(budget * 1000.0 - 1e-9) / 1000.0, 0.001)


def constants(f: LorenzMap, pi: float) -> BoundsConstants:
    """α, η, κ, γ, ν, ξ for the budget π."""
    if pi < 0:
        raise LorenzDomainError(f"distortion budget must be nonnegative, got {pi}")
    c1m, c1p = f.c1_minus, f.c1_plus
    if c1m <= 0.0 or c1p >= 1.0:
        raise DegenerateMapError(
            "critical values make the constants undefined (c1- = 0 or c1+ = 1)",
            {"c1_minus": c1m, "c1_plus": c1p},
        )
    rho, c, mu = f.rho, f.c, f.mu
    damp = math.exp(-pi)
    return BoundsConstants(
        alpha=damp / rho,
        eta=damp * mu / ((1.0 - c1p) * rho),
        kappa=damp * c / (c1m * rho),
        gamma=math.exp(2.0 * pi) / rho,
        nu=mu / (1.0 - c1p) ** (1.0 / rho),
        xi=c / c1m ** (1.0 / rho),
        pi=pi, rho=rho, c=c, mu=mu, c1_minus=c1m, c1_plus=c1p,
    )


def _delta_theta(k: BoundsConstants, n: int, m: int) -> Tuple[float, float]:
    rho, c, mu, pi = k.rho, k.c, k.mu, k.pi
    tail = math.exp(-pi / (rho - 1.0))
    inner_delta = k.kappa * (c / (c - k.c1_plus)) ** (rho - 1.0) * k.nu ** (rho / (rho - 1.0)) * tail
    inner_theta = k.eta * (mu / (k.c1_minus - c)) ** (rho - 1.0) * k.xi ** (rho / (rho - 1.0)) * tail
    delta = inner_delta ** (rho ** n / (rho ** n - 1.0))
    theta = inner_theta ** (rho ** m / (rho ** m - 1.0))
    return delta, theta


def delta_theta(f: LorenzMap, pi: float, n: int, m: int) -> Tuple[float, float]:
    """Lower bounds Δ ≤ |p − f₀⁻¹(c)| and Θ ≤ |q − f₁⁻¹(c)|."""
    if not f.is_nontrivial():
        raise DegenerateMapError("bounds need a nontrivial map", {"c1_minus": f.c1_minus, "c1_plus": f.c1_plus})
    return _delta_theta(constants(f, pi), n, m)


def critical_value_lbs(
    consts: BoundsConstants, delta: float, theta: float, n: int, m: int
) -> Tuple[Optional[float], Optional[float]]:
    """
    c₁⁺ ≥ κᵐΔ/(1−κᵐ) and 1−c₁⁻ ≥ ηⁿΘ/(1−ηⁿ).

    A side whose hypothesis (κ < 1, resp. η < 1) fails is returned as None.
    """
    c1plus_lb = None
    if consts.kappa < 1.0:
        km = consts.kappa ** m
        c1plus_lb = km * delta / (1.0 - km)
    one_minus_lb = None
    if consts.eta < 1.0:
        en = consts.eta ** n
        one_minus_lb = en * theta / (1.0 - en)
    return c1plus_lb, one_minus_lb


def lr_bounds(
    consts: BoundsConstants,
    delta: float,
    theta: float,
    n: int,
    m: int,
    K: float,
    len_l: float,
    len_r: float,
) -> Optional[Dict[str, float]]:
    """
    Upper and lower bounds on |L| and |R|.

    The lower bound on |L| uses the measured |R| and vice versa. Returns None
    unless 0 < 2π < ln ρ.
    """
    k = consts
    if not (k.pi > 0.0 and 2.0 * k.pi < math.log(k.rho)):
        return None
    rho, c, mu, g = k.rho, k.c, k.mu, k.gamma
    c1m, c1p = k.c1_minus, k.c1_plus
    e_pi = math.exp(k.pi)

    def geometric(ratio: float, count: int) -> float:
        return sum(ratio ** (j - 1) for j in range(1, count + 1))

    upper_l1 = ((c1m - c) * c ** rho * e_pi / c1m) ** (1.0 / (rho + 1.0)) \
        * ((1.0 / g - 1.0) / (g ** -n - 1.0)) ** (1.0 / (rho + 1.0))
    upper_l2 = (mu ** 2 * (mu / (theta + len_r)) ** (rho - 1.0) * g * c ** rho / ((1.0 - c1p) * c1m)) \
        ** (1.0 / (rho + rho ** -(n - 1)))
    en = k.eta ** n
    ratio_l = math.exp(-2.0 * k.pi) / k.eta * (theta + len_r) ** (rho - 1.0) / mu ** (rho - 1.0)
    lower_l = (math.exp(-k.pi) * c ** rho * en / c1m) ** (1.0 / (rho - 1.0)) \
        * math.exp(K * en * theta / (mu * (1.0 - en)) * geometric(ratio_l, n))

    upper_r1 = ((c - c1p) * mu ** rho * e_pi / (1.0 - c1p)) ** (1.0 / (rho + 1.0)) \
        * ((1.0 / g - 1.0) / (g ** -m - 1.0)) ** (1.0 / (rho + 1.0))
    upper_r2 = (c ** 2 * (c / (delta + len_l)) ** (rho - 1.0) * g * mu ** rho / ((1.0 - c1p) * c1m)) \
        ** (1.0 / (rho + rho ** -(m - 1)))
    km = k.kappa ** m
    ratio_r = math.exp(-2.0 * k.pi) / k.kappa * (delta + len_l) ** (rho - 1.0) / c ** (rho - 1.0)
    lower_r = (math.exp(-k.pi) * mu ** rho * km / (1.0 - c1p)) ** (1.0 / (rho - 1.0)) \
        * math.exp(K * km * delta / (c * (1.0 - km)) * geometric(ratio_r, m))

    return {
        "L_upper_1": upper_l1, "L_upper_2": upper_l2, "L_lower": lower_l,
        "R_upper_1": upper_r1, "R_upper_2": upper_r2, "R_lower": lower_r,
    }


def _in_class(f: LorenzMap, pi: float, eps: float = 0.0) -> bool:
    return (
        max(distortion(f.phi), distortion(f.psi)) <= pi + 1e-12
        and eps <= f.c <= 1.0 - eps
    )


def _window(f: LorenzMap, n: int, m: int, data: Optional[RenormalizationData]) -> RenormalizationData:
    if data is None:
        return detect_monotone(f, n, m)
    return data


def koebe_factors(f: LorenzMap, data: RenormalizationData) -> Dict[str, float]:
    """Space around the window on both sides, and the derivative-ratio bound it gives."""
    p, q = data.p, data.q
    length = q - p
    c1m, c1p = f.c1_minus, f.c1_plus
    tau1, tau2 = (1.0 - q) / length, (p - c1p) / length
    zeta1, zeta2 = p / length, (c1m - q) / length
    tau, zeta = min(tau1, tau2), min(zeta1, zeta2)
    factors = {"tau1": tau1, "tau2": tau2, "zeta1": zeta1, "zeta2": zeta2, "tau": tau, "zeta": zeta}
    if tau > 0:
        factors["koebe_tau"] = koebe_bounds(tau)[1]
    if zeta > 0:
        factors["koebe_zeta"] = koebe_bounds(zeta)[1]
    factors["b1"] = max(((q - c1p) / (p - c1p)) ** 2, ((c1m - p) / (c1m - q)) ** 2)
    return factors


def invariance_report(
    f: LorenzMap,
    pi: float,
    eps: float,
    n: int,
    m: int,
    data: Optional[RenormalizationData] = None,
    step_tol: float = DEFAULT_STEP_TOL,
) -> InvarianceReport:
    """Renormalize once and check dist ≤ π and c̃ ∈ [ε, 1−ε] on the result."""
    report = InvarianceReport(applicable=False, n=n, m=m, pi=pi, eps=eps)
    if not _in_class(f, pi, eps):
        report.reason = "map outside the compact class (distortion or critical point)"
        return report
    data = _window(f, n, m, data)
    g = renormalization_step(f, data, tol=step_tol).output

    report.applicable = True
    report.dist_phi = distortion(g.phi)
    report.dist_psi = distortion(g.psi)
    report.c_tilde = g.c
    report.distortion_invariant = max(report.dist_phi, report.dist_psi) <= pi + 1e-12
    report.critical_point_invariant = eps <= g.c <= 1.0 - eps

    factors = koebe_factors(f, data)
    report.b1 = factors.pop("b1")
    report.koebe = factors
    report.b1_dominates_distortion = math.exp(max(report.dist_phi, report.dist_psi)) <= report.b1 * (1 + 1e-9)
    report.b1_below_exp_half_pi = report.b1 <= math.exp(pi / 2.0)
    report.b1_below_exp_pi = report.b1 <= math.exp(pi)
    return report


def bounds_report(
    f: LorenzMap,
    n: int,
    m: int,
    pi: Optional[float] = None,
    K: float = DEFAULT_K,
    k_values: Sequence[float] = DEFAULT_K_VALUES,
    data: Optional[RenormalizationData] = None,
    slack: float = DEFAULT_SLACK,
    step_tol: float = DEFAULT_STEP_TOL,
) -> BoundsReport:
    """Evaluate every bound for an (n, m)-renormalizable map next to the measured values."""
    budget = default_pi(f) if pi is None else float(pi)
    data = _window(f, n, m, data)
    consts = constants(f, budget)
    delta, theta = _delta_theta(consts, n, m)
    g = renormalization_step(f, data, tol=step_tol).output

    len_l, len_r = data.c - data.p, data.q - data.c
    measured = {
        "L": len_l,
        "R": len_r,
        "p_gap": abs(data.p - float(inverse_branch(f.c, f, "left"))),
        "q_gap": abs(data.q - float(inverse_branch(f.c, f, "right"))),
        "c1_plus": f.c1_plus,
        "one_minus_c1_minus": 1.0 - f.c1_minus,
        "dist_phi_tilde": distortion(g.phi),
        "dist_psi_tilde": distortion(g.psi),
        "c_tilde": g.c,
        "c_tilde_scaling_error": abs(g.c - len_l / (len_l + len_r)),
    }

    in_budget = _in_class(f, budget)
    lr_ok = budget > 0.0 and 2.0 * budget < math.log(f.rho)
    hypotheses = {
        "distortion_budget": in_budget,
        "kappa_below_one": consts.kappa < 1.0,
        "eta_below_one": consts.eta < 1.0,
        "two_pi_below_log_rho": lr_ok,
    }

    c1plus_lb, one_minus_lb = critical_value_lbs(consts, delta, theta, n, m)
    checks = [
        BoundCheck("delta", "lower", delta, measured["p_gap"], in_budget, slack),
        BoundCheck("theta", "lower", theta, measured["q_gap"], in_budget, slack),
        BoundCheck("c1_plus", "lower", c1plus_lb, measured["c1_plus"],
                   in_budget and hypotheses["kappa_below_one"], slack),
        BoundCheck("one_minus_c1_minus", "lower", one_minus_lb, measured["one_minus_c1_minus"],
                   in_budget and hypotheses["eta_below_one"], slack),
    ]

    lengths = lr_bounds(consts, delta, theta, n, m, K, len_l, len_r)
    assert_lr = in_budget and lr_ok
    for name in ("L_upper_1", "L_upper_2", "L_lower", "R_upper_1", "R_upper_2", "R_lower"):
        side = "L" if name.startswith("L") else "R"
        kind = "lower" if name.endswith("lower") else "upper"
        bound = lengths[name] if lengths else None
        checks.append(BoundCheck(name, kind, bound, measured[side], assert_lr, slack))

    sensitivity: Dict[str, Dict[str, Any]] = {}
    for k_value in k_values:
        values = lr_bounds(consts, delta, theta, n, m, k_value, len_l, len_r)
        if values is None:
            sensitivity[str(k_value)] = {"computed": False}
            continue
        sensitivity[str(k_value)] = {
            "computed": True,
            "L_lower": values["L_lower"],
            "R_lower": values["R_lower"],
            "L_lower_holds": values["L_lower"] <= len_l + slack,
            "R_lower_holds": values["R_lower"] <= len_r + slack,
        }

    report = BoundsReport(consts, n, m, K, delta, theta, measured, checks, hypotheses, sensitivity)
    if report.violations:
        logger.warning(f"Bounds violated for type ({n},{m}): {[c.name for c in report.violations]}")
    return report


def derivative_bounds(f: LorenzMap, pi: float, samples: int = 1000) -> List[BoundCheck]:
    """
    c₁⁻e^{−π}/u ≤ Dφ ≤ c₁⁻e^{π}/u on [0, u] and the mirror for ψ on [1−v, 1].

    φ maps [0, u] onto [0, c₁⁻], so some point has Dφ = c₁⁻/u; bounded
    distortion spreads that by e^{±π}.
    """
    applicable = _in_class(f, pi)
    checks: List[BoundCheck] = []
    if f.u > 0:
        xs = np.linspace(0.0, f.u, samples)
        d = np.asarray(f.phi.derivative(xs))
        mean = f.c1_minus / f.u
        checks.append(BoundCheck("dphi_lower", "lower", mean * math.exp(-pi), float(d.min()), applicable))
        checks.append(BoundCheck("dphi_upper", "upper", mean * math.exp(pi), float(d.max()), applicable))
    if f.v > 0:
        xs = np.linspace(1.0 - f.v, 1.0, samples)
        d = np.asarray(f.psi.derivative(xs))
        mean = (1.0 - f.c1_plus) / f.v
        checks.append(BoundCheck("dpsi_lower", "lower", mean * math.exp(-pi), float(d.min()), applicable))
        checks.append(BoundCheck("dpsi_upper", "upper", mean * math.exp(pi), float(d.max()), applicable))
    return checks


def retract_critical_value_bounds(f: LorenzMap, t: float, pi: float, c0: Optional[float] = None) -> List[BoundCheck]:
    """
    φ_t(u) ≤ (c₁⁻)^{1−t}u^t(te^{π(1−t)} + (1−t)e^{πt}) and
    ψ_t(1−v) ≥ (c₁⁺)^{1−t}(1−v)^t(te^{−π(1−t)} + (1−t)e^{−πt})
    for the retracted coefficients.
    """
    retracted = deformation_retract(f, t, f.c if c0 is None else c0)
    applicable = _in_class(f, pi)
    up = t * math.exp(pi * (1.0 - t)) + (1.0 - t) * math.exp(pi * t)
    down = t * math.exp(-pi * (1.0 - t)) + (1.0 - t) * math.exp(-pi * t)
    upper = f.c1_minus ** (1.0 - t) * f.u ** t * up
    lower = f.c1_plus ** (1.0 - t) * (1.0 - f.v) ** t * down
    return [
        BoundCheck("phi_t_of_u", "upper", upper, retracted.c1_minus, applicable, 1e-10),
        BoundCheck("psi_t_of_one_minus_v", "lower", lower, retracted.c1_plus, applicable, 1e-10),
    ]


def boundary_class(
    f: LorenzMap,
    pi: float,
    eps: float,
    renormalized: Optional[LorenzMap] = None,
    tol: float = 1e-9,
) -> Dict[str, bool]:
    """
    Which boundary conditions of the compact renormalizable class hold.

    Branch conditions are read on the renormalized map when given (full means
    u or v equals 1, trivial means the branch misses c); distortion saturation
    and the ε-boundary are read on f.
    """
    g = renormalized if renormalized is not None else f
    flags = {
        "left_full": abs(g.u - 1.0) <= tol,
        "right_full": abs(g.v - 1.0) <= tol,
        "left_trivial": g.c1_minus <= g.c + tol,
        "right_trivial": g.c1_plus >= g.c - tol,
        "distortion_saturated": abs(max(distortion(f.phi), distortion(f.psi)) - pi) <= tol,
        "critical_point_on_boundary": abs(f.c - eps) <= tol or abs(f.c - (1.0 - eps)) <= tol,
    }
    flags["branch_boundary"] = any(flags[k] for k in ("left_full", "right_full", "left_trivial", "right_trivial"))
    flags["on_boundary"] = (
        flags["branch_boundary"] or flags["distortion_saturated"] or flags["critical_point_on_boundary"]
    )
    return flags


def empirical_threshold(reports: Iterable[InvarianceReport]) -> Optional[int]:
    """
    Smallest N such that every applicable report with n, m ≥ N is invariant.

    Returns None when no such N is supported by the reports.
    """
    usable = [r for r in reports if r.applicable]
    if not usable:
        return None
    for threshold in sorted({min(r.n, r.m) for r in usable}):
        group = [r for r in usable if min(r.n, r.m) >= threshold]
        if group and all(r.invariant for r in group):
            return threshold
    return None
