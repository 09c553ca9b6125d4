"""Dimension theory in the unstable direction via Bowen's equation.

The geometric family t -> phi_t^geo has affine pressure on every built-in
system: the unstable Jacobian is a constant lambda, so P(t) = h_top - t log
lambda exactly.  Closed forms are therefore authoritative and the numerical
evaluator (partition sums through `pressure_estimate`) is a consistency
check whose Fekete bracket propagates into an interval around the root t_0.

Two dimension estimates close the loop: `conformal_dim_check` compares
t_0 * dim E^u against an independent Hausdorff-dimension estimate of the
leaf set (cover optimization on the self-similar leaf discretization), and
`measure_dimension` estimates the Caratheodory dimension of a measure as
the critical exponent of minimal high-mass cell unions, reported along a
schedule of mass deficits delta -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

import hypeq.systems as systems
from hypeq.caratheodory import (CStructure, critical_value,
                                hausdorff_structure, target_cylinders)
from hypeq.equilibrium import SftGibbsMeasure
from hypeq.pressure import pressure_estimate
from hypeq.refmeasure import LeafMeasure
from hypeq.systems import DynamicsError, SystemDescriptor

__all__ = [
    "PressureFunction",
    "PressureCertificate",
    "BowenRoot",
    "ConformalDimReport",
    "MeasureDimensionReport",
    "pressure_function",
    "topological_entropy",
    "bowen_root",
    "leafset_hausdorff_structure",
    "reparametrized_structure",
    "conformal_dim_check",
    "measure_dimension",
]

_DEFAULT_GRID = tuple(float(t) for t in np.linspace(0.0, 2.0, 21))


# ---------------------------------------------------------------------------
# the pressure function t -> P(phi_t^geo)


def topological_entropy(sys: SystemDescriptor) -> float:
    """h_top for the built-in families (log of the Perron root on SFTs)."""
    if sys.family == "cat_map":
        return math.log(systems.CAT_LAMBDA_U)
    if sys.family in ("solenoid", "horseshoe"):
        return math.log(2.0)
    if sys.family == "full_shift":
        return math.log(sys.p)
    if sys.family == "sft":
        A = systems.transition_matrix(sys).astype(float)
        return float(np.log(np.abs(np.linalg.eigvals(A)).max()))
    raise DynamicsError(f"no entropy formula for family {sys.family!r}")


@dataclass(frozen=True)
class PressureCertificate:
    """Grid evidence for the qualitative shape of t -> P(t)."""

    grid: tuple
    values: tuple
    decreasing: bool
    midpoint_convex: bool
    entropy_gap: float           # |P(0) - h_top|, 0 when 0 is not probed
    entropy_tol: float
    convexity_tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {"grid": list(self.grid), "values": list(self.values),
                "decreasing": self.decreasing,
                "midpoint_convex": self.midpoint_convex,
                "entropy_gap": self.entropy_gap,
                "entropy_tol": self.entropy_tol,
                "convexity_tol": self.convexity_tol, "passed": self.passed}


@dataclass(frozen=True, eq=False)
class PressureFunction:
    """Evaluator for the pressure of the geometric potential family.

    method "closed_form" returns entropy - t * chi exactly; "numerical" runs
    `pressure_estimate` on phi_t^geo and carries its bracket.  Evaluations
    are cached — root finding revisits nearby t values.
    """

    sys: SystemDescriptor
    method: str
    entropy: float
    chi: float                   # log of the unstable volume expansion
    r: float = 0.75
    n_range: tuple = tuple(range(4, 13))
    variant: str = "sep"
    domain: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    def evaluate(self, t: float) -> tuple[float, float, float]:
        """(P(t), lower, upper); the bracket is degenerate for closed forms."""
        t = float(t)
        if self.method == "closed_form":
            v = self.entropy - t * self.chi
            return v, v, v
        if t not in self._cache:
            est = pressure_estimate(self.sys, systems.geometric_t(t), self.r,
                                    self.n_range, domain=self.domain,
                                    variant=self.variant)
            self._cache[t] = (est.value, est.lower, est.upper)
        return self._cache[t]

    def __call__(self, t: float) -> float:
        return self.evaluate(t)[0]

    def table(self, ts: Sequence[float] = _DEFAULT_GRID) -> tuple:
        return tuple((float(t),) + self.evaluate(t) for t in ts)

    def certificate(self, ts: Sequence[float] = _DEFAULT_GRID) -> PressureCertificate:
        """Strict decrease, midpoint convexity and P(0) = h_top on a grid."""
        ts = tuple(float(t) for t in ts)
        if len(ts) < 3:
            raise ValueError("certificates need at least 3 grid points")
        rows = self.table(ts)
        vals = tuple(r[1] for r in rows)
        width = max(r[3] - r[2] for r in rows)
        conv_tol = 1e-9 + 2.0 * width
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        convex = all(vals[i + 1] <= 0.5 * (vals[i] + vals[i + 2]) + conv_tol
                     for i in range(len(vals) - 2))
        gap = abs(vals[ts.index(0.0)] - self.entropy) if 0.0 in ts else 0.0
        ent_tol = 1e-9 if self.method == "closed_form" \
            else max(0.05 * self.entropy, width)
        passed = decreasing and convex and gap <= ent_tol
        return PressureCertificate(ts, vals, decreasing, convex, gap,
                                   ent_tol, conv_tol, passed)


def pressure_function(sys: SystemDescriptor, method: str = "closed_form",
                      r: Optional[float] = None,
                      n_range: Optional[Sequence[int]] = None,
                      variant: Optional[str] = None) -> PressureFunction:
    """Build the pressure evaluator for a system.

    Numerical defaults pick the cheap exact witness family per system:
    cylinder enumeration on shifts, periodic points on the cat map and the
    horseshoe, a leaf-ball grid on the solenoid.
    """
    if method not in ("closed_form", "numerical"):
        raise ValueError(f"unknown pressure method {method!r}")
    chi = math.log(sys.vol_expansion)
    h = topological_entropy(sys)
    domain = None
    if method == "numerical":
        if sys.is_shift():
            r = 0.75 if r is None else r
            variant = "sep" if variant is None else variant
        elif sys.family in ("cat_map", "horseshoe"):
            r = 0.1 if r is None else r
            variant = "per" if variant is None else variant
        elif sys.family == "solenoid":
            r = 0.05 if r is None else r
            variant = "sep" if variant is None else variant
            domain = systems.leaf_chart(
                sys, systems.solenoid_attractor_point(sys, 0.1))
        else:
            raise DynamicsError(f"no partition-sum sampler for {sys.family!r}")
    n_range = tuple(range(4, 13)) if n_range is None else tuple(n_range)
    return PressureFunction(sys, method, h, chi, r if r is not None else 0.75,
                            n_range, variant if variant else "sep", domain)


# ---------------------------------------------------------------------------
# Bowen's equation


@dataclass(frozen=True)
class BowenRoot:
    """Root of P(t) = 0 with the probe-grid pressure table behind it."""

    t0: float
    method: str
    tolerance: float
    pressure_at_root: float
    bracket: tuple               # final (a, b) enclosing interval
    t0_interval: tuple           # bracket-propagated uncertainty
    table: tuple                 # rows (t, P(t), lower, upper)
    iterations: int

    def to_dict(self) -> dict:
        return {"t0": self.t0, "method": self.method,
                "tolerance": self.tolerance,
                "pressure_at_root": self.pressure_at_root,
                "bracket": list(self.bracket),
                "t0_interval": list(self.t0_interval),
                "table": [list(r) for r in self.table],
                "iterations": self.iterations}

    def trace_rows(self) -> list:
        """(t, value, lower, upper) rows for the pressure-curve CSV."""
        return [tuple(r) for r in self.table]


def bowen_root(pf: PressureFunction, tolerance: float = 1e-9,
               probe: Optional[Sequence[float]] = None) -> BowenRoot:
    """Solve P(t_0) = 0 by bisection with a secant polish.

    The returned root satisfies |P(t_0)| < tolerance and sits in a bracket
    narrower than tolerance.  For numerical evaluators the pressure bracket
    at the root is divided by the exact slope chi to give `t0_interval`.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    probe = _DEFAULT_GRID if probe is None else tuple(float(t) for t in probe)
    table = pf.table(probe)
    vals = [r[1] for r in table]

    for t, v in zip(probe, vals):
        if v == 0.0:
            lo, hi = pf.evaluate(t)[1:]
            return BowenRoot(float(t), pf.method, tolerance, 0.0, (t, t),
                             (float(t + lo / pf.chi), float(t + hi / pf.chi)),
                             table, 0)

    a = b = None
    for i in range(len(probe) - 1):
        if vals[i] > 0.0 > vals[i + 1]:
            a, b = probe[i], probe[i + 1]
            fa, fb = vals[i], vals[i + 1]
            break
    if a is None:
        raise ValueError(
            "no sign change on the probe grid: P ranges "
            f"[{min(vals):.6g}, {max(vals):.6g}] over t in "
            f"[{probe[0]:g}, {probe[-1]:g}]")

    m, fm = a, fa
    iters = 0
    while (b - a) >= tolerance or abs(fm) >= tolerance:
        iters += 1
        if iters > 200:
            raise ValueError("root refinement failed to converge")
        # secant proposal, midpoint when it degenerates or leaves the bracket
        m = a - fa * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not a < m < b:
            m = 0.5 * (a + b)
        if iters % 2 == 0:
            m = 0.5 * (a + b)    # force bisection to keep the bracket shrinking
        fm = pf(m)
        if fm > 0.0:
            a, fa = m, fm
        elif fm < 0.0:
            b, fb = m, fm
        else:
            break
    lo, hi = pf.evaluate(m)[1:]
    return BowenRoot(float(m), pf.method, tolerance, float(fm),
                     (float(a), float(b)),
                     (float(m + lo / pf.chi), float(m + hi / pf.chi)),
                     table, iters)


# ---------------------------------------------------------------------------
# leaf-set geometry and the conformal identity


def leafset_hausdorff_structure(sys: SystemDescriptor) -> CStructure:
    """Hausdorff cover structure on the discretized unstable leaf set.

    Cat-map and solenoid leaves fill an interval; horseshoe leaf sets are
    the middle-(beta) construction whose level-n pieces are the u-strips of
    width beta^-n; full-shift leaf sets carry the p-adic coding geometry.
    """
    if sys.family in ("cat_map", "solenoid"):
        return hausdorff_structure("interval")
    if sys.family == "horseshoe":
        if abs(sys.beta - 3.0) < 1e-12:
            return hausdorff_structure("cantor")
        return CStructure(kind="hausdorff", backend="selfsimilar",
                          label=f"hausdorff[strips beta={sys.beta:g}]",
                          geom=(2, 1.0 / sys.beta, 0.5))
    if sys.family == "full_shift":
        return CStructure(kind="hausdorff", backend="selfsimilar",
                          label=f"hausdorff[{sys.p}-adic]",
                          geom=(sys.p, 1.0 / sys.p, 0.5))
    raise DynamicsError(
        f"no self-similar leaf-set geometry for family {sys.family!r}")


def reparametrized_structure(sys: SystemDescriptor) -> CStructure:
    """Leaf cover structure with xi = 1 and eta = the inverse unstable
    volume-expansion product over the cell order.

    On the built-ins that product is lambda_u^n, 2^n, beta^n or p^n, so the
    alpha-weighted cover sums evaluate (prod |det Df|_{E^u}|)^-alpha cell by
    cell and the critical exponent lands directly in dimension units.  The
    cat map gets a non-integer branching rate: whole-space critical values
    work, cell enumeration does not.
    """
    lam = sys.vol_expansion
    if sys.family == "cat_map":
        k = lam
    elif sys.family in ("solenoid", "horseshoe"):
        k = 2
    elif sys.family == "full_shift":
        k = sys.p
    else:
        raise DynamicsError(
            f"no self-similar reparametrization for family {sys.family!r}")
    return CStructure(kind="hausdorff", backend="selfsimilar",
                      label=f"reparametrized[{sys.family}]",
                      geom=(k, 1.0 / lam, 0.5))


@dataclass(frozen=True)
class ConformalDimReport:
    t0: float
    dim_u: int
    expected: float              # t0 * dim E^u
    estimate: float              # leaf-set Hausdorff estimate
    residual: float
    tol: float
    passed: bool
    structure: str
    crossings: tuple

    def to_dict(self) -> dict:
        return {"t0": self.t0, "dim_u": self.dim_u, "expected": self.expected,
                "estimate": self.estimate, "residual": self.residual,
                "tol": self.tol, "passed": self.passed,
                "structure": self.structure,
                "crossings": list(self.crossings)}


def conformal_dim_check(sys: SystemDescriptor, t0: float,
                        tol: float = 0.02) -> ConformalDimReport:
    """Compare t0 * dim E^u with an independent leaf-set dimension estimate.

    The estimate never sees the pressure function: it is the critical
    exponent of pure Hausdorff covers on the leaf-set discretization.
    """
    struct = leafset_hausdorff_structure(sys)
    est = critical_value(struct, bracket=(0.0, 2.0))
    expected = float(t0) * sys.dim_u
    residual = abs(expected - est.value)
    return ConformalDimReport(float(t0), sys.dim_u, expected,
                              float(est.value), float(residual), float(tol),
                              bool(residual < tol), struct.label,
                              est.crossings)


# ---------------------------------------------------------------------------
# Caratheodory dimension of measures


@dataclass(frozen=True)
class MeasureDimensionReport:
    """dim_C mu estimated through minimal high-mass cell unions.

    For each delta and refinement level n the minimal-cardinality union Z of
    level-n cells with mu(Z) > 1 - delta is selected greedily (exact for the
    single-level cover value) and its critical exponent is computed at
    matched cover order; per-delta crossings extrapolate over the level
    ladder, and `estimate` is the value at the smallest delta.
    """

    estimate: float
    deltas: tuple
    levels: tuple
    values: tuple                # per-delta extrapolated estimates
    crossings: tuple             # per-delta tuples over levels
    counts: tuple                # per-delta chosen-cell counts over levels
    structure: str
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "deltas": list(self.deltas),
                "levels": list(self.levels), "values": list(self.values),
                "crossings": [list(c) for c in self.crossings],
                "counts": [list(c) for c in self.counts],
                "structure": self.structure, "meta": dict(self.meta)}

    def trace_rows(self) -> list:
        rows = []
        for d, cs in zip(self.deltas, self.crossings):
            rows.extend((n, f"delta={d:g}", c) for n, c in zip(self.levels, cs))
        return rows


def _extrapolate(ns, ys) -> float:
    """Neville extrapolation of (1/n, y) to n = infinity."""
    xs = 1.0 / np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float).copy()
    m = len(xs)
    for k in range(1, m):
        ys[:m - k] = (ys[1:m - k + 1] * xs[:m - k] - ys[:m - k] * xs[k:]) \
            / (xs[:m - k] - xs[k:])
    return float(ys[0])


def _digit_words(struct: CStructure, xs: np.ndarray, n: int, k: int) -> np.ndarray:
    """Construction digits of leaf parameters in [0, 1], level n.

    Children are equally spaced within the parent, so the digit at each
    level is a floor division; parameters in construction gaps attach to
    the cell on their left.
    """
    if (xs < 0.0).any() or (xs > 1.0).any():
        raise ValueError("leaf parameters must lie in the unit cell")
    geom = {"interval": (2, 0.5, 0.5), "cantor": (2, 1.0 / 3.0, 0.5)}.get(
        struct.space) if struct.geom is None else struct.geom
    if geom is None:
        raise ValueError(f"no 1-d cell geometry for space {struct.space!r}")
    rho = geom[1]
    gap = (1.0 - rho) / (k - 1) if k > 1 else 1.0
    lo = np.zeros_like(xs, dtype=float)
    width = 1.0
    out = np.zeros((len(xs), n), dtype=np.int64)
    for j in range(n):
        c = np.clip(np.floor((xs - lo) / (gap * width)).astype(np.int64),
                    0, k - 1)
        out[:, j] = c
        lo = lo + c * gap * width
        width *= rho
    return out


def _cell_masses(struct: CStructure, mu, n: int, k: int):
    """(words, masses) of the occupied level-n cells under mu."""
    if isinstance(mu, SftGibbsMeasure):
        if mu.sys.p != k:
            raise ValueError("measure alphabet does not match the structure "
                             f"branching ({mu.sys.p} vs {k})")
        words = systems.admissible_words(mu.sys, n)
        return words, mu.cylinder_mass_bulk(words)
    if isinstance(mu, LeafMeasure):
        if mu.kind != "cylinders":
            raise ValueError("geometric atom measures are not representable "
                             "on self-similar cells")
        if n > mu.order:
            raise ValueError(f"refinement level {n} exceeds the measure "
                             f"order {mu.order}")
        rows, weights = mu.words[:, :n], mu.weights
    elif mu.words is not None:
        if mu.offset > 0:
            raise DynamicsError("atom windows do not cover coordinate 0")
        start = -mu.offset
        if mu.words.shape[1] < start + n:
            raise ValueError(f"atom words are too short for refinement "
                             f"level {n}")
        rows, weights = mu.words[:, start:start + n], mu.weights
    else:
        xs = np.asarray(mu.coords, dtype=float)
        if xs.ndim == 2:
            if xs.shape[1] != 1:
                raise ValueError("coordinate atoms must be one-dimensional "
                                 "leaf parameters")
            xs = xs[:, 0]
        rows, weights = _digit_words(struct, xs, n, k), mu.weights
    if rows.size and int(rows.max()) >= k:
        raise ValueError("measure alphabet does not match the structure "
                         f"branching (symbol {int(rows.max())} vs k={k})")
    uw, inv = np.unique(rows, axis=0, return_inverse=True)
    masses = np.zeros(len(uw))
    np.add.at(masses, inv, weights)
    return uw, masses


def measure_dimension(C: CStructure, mu, deltas=(0.5, 0.25, 0.1, 0.05),
                      levels: Optional[Sequence[int]] = None) -> MeasureDimensionReport:
    """Caratheodory dimension of a measure on a self-similar cover structure.

    mu may be an EmpiricalMeasure (cylinder words or 1-d leaf parameters),
    a LeafMeasure of cylinder kind, or an exact SFT Gibbs oracle.  Covers of
    the chosen unions use cells of the same order as the union — coarser
    cells would certify the union's closure instead of the measure.
    """
    if C.kind != "hausdorff" or C.backend != "selfsimilar":
        raise ValueError("measure dimension needs a self-similar cover "
                         f"structure, got {C.label}")
    deltas = tuple(sorted({float(d) for d in deltas}, reverse=True))
    if not deltas or deltas[0] >= 1.0 or deltas[-1] <= 0.0:
        raise ValueError("mass deficits must lie in (0, 1)")
    levels = (8, 11, 14) if levels is None else tuple(int(n) for n in levels)
    if len(levels) < 2 or list(levels) != sorted(set(levels)):
        raise ValueError("levels must be strictly increasing with >= 2 entries")
    k = len(C.cells(1))

    per_level = {}
    for n in levels:
        words, masses = _cell_masses(C, mu, n, k)
        total = float(masses.sum())
        if total <= 0.0:
            raise ValueError("null measure")
        order = np.argsort(-masses, kind="stable")
        cum = np.cumsum(masses[order]) / total
        per_level[n] = (words, order, cum)

    crossings, counts = [], []
    for d in deltas:
        cs, ks = [], []
        for n in levels:
            words, order, cum = per_level[n]
            cnt = min(int(np.searchsorted(cum, 1.0 - d, side="right")) + 1,
                      len(cum))
            chosen = words[order[:cnt]]
            cv = critical_value(C, target_cylinders([tuple(int(c) for c in w)
                                                     for w in chosen]),
                                levels=(n,), window=0)
            cs.append(float(cv.value))
            ks.append(cnt)
        crossings.append(tuple(cs))
        counts.append(tuple(ks))

    values = tuple(_extrapolate(levels, cs) for cs in crossings)
    return MeasureDimensionReport(values[-1], deltas, levels, values,
                                  tuple(crossings), tuple(counts), C.label,
                                  meta={"kind": type(mu).__name__})
