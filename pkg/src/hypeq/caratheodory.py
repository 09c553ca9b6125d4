"""Weighted-cover outer measures and their critical exponents.

A cover structure bundles an indexed family of sets U_s (balls, cylinders,
u-Bowen cells) with a weight xi(s) and two size gauges eta(s), psi(s).  At
refinement level N only indices with psi(s) <= eps(N) may be used, and the
alpha-weighted cover value is  inf_G sum_{s in G} xi(s) eta(s)^alpha  over
covers G of the target set.  As the level grows the value jumps from +inf
to 0 at a critical exponent; for Hausdorff-type structures that exponent is
a dimension, for Birkhoff-weighted cylinder covers it is the pressure.

Cover optimization is exact on cylinder trees (a node is either covered by
its own cell or delegated to its children; the optimum collapses to one
min-recursion per depth and symbol-state).  Geometric leaf structures use
a marching cover of the arc as the upper bound and a separated family as
the lower bound.  Two-dimensional Bowen covers of the torus use regular
tilings; the greedy gain over a tiling is negligible for
translation-homogeneous targets and the tiling keeps the bound certified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import systems
from .systems import (
    DynamicsError,
    LeafChart,
    Potential,
    SystemDescriptor,
    admissible_words,
    transition_matrix,
)
from .pressure import bowen_distortion_constant

__all__ = [
    "CellIndex",
    "CoverCandidate",
    "CStructure",
    "OuterMeasureEstimate",
    "CriticalValue",
    "StructureReport",
    "Target",
    "target_all",
    "target_empty",
    "target_cylinders",
    "target_intervals",
    "target_point",
    "hausdorff_structure",
    "pressure_structure",
    "leaf_structure",
    "validate_cstructure",
    "outer_measure",
    "critical_value",
]

_ENUM_BUDGET = 1 << 18


# ---------------------------------------------------------------------------
# index / target descriptors


@dataclass(frozen=True)
class CellIndex:
    """One index s: a cell of order n (cylinder word or metric ball center)."""

    order: int
    word: Optional[tuple] = None      # tree cells
    center: Optional[tuple] = None    # arc / grid cells (arc: (t,))

    def to_dict(self) -> dict:
        return {"order": self.order,
                "word": None if self.word is None else list(self.word),
                "center": None if self.center is None else list(self.center)}


@dataclass(frozen=True)
class Target:
    """Cover target: whole space, empty set, cylinder union, interval union
    or a single point.  Intervals live in the structure's 1-d parameter
    (arc-length for leaf charts, [0,1] for Hausdorff lines)."""

    kind: str                                  # all | empty | cylinders | intervals | point
    words: Optional[tuple] = None
    intervals: Optional[tuple] = None
    point: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "words": None if self.words is None else [list(w) for w in self.words],
                "intervals": None if self.intervals is None else [list(i) for i in self.intervals],
                "point": None if self.point is None else list(self.point)}


def target_all() -> Target:
    return Target("all")


def target_empty() -> Target:
    return Target("empty")


def target_cylinders(words: Sequence[Sequence[int]]) -> Target:
    ws = tuple(tuple(int(c) for c in w) for w in words)
    if not ws:
        return target_empty()
    if any(len(w) == 0 for w in ws):
        raise ValueError("cylinder words must be nonempty")
    return Target("cylinders", words=ws)


def target_intervals(intervals: Sequence[Sequence[float]]) -> Target:
    iv = tuple((float(a), float(b)) for a, b in intervals)
    if not iv:
        return target_empty()
    if any(b <= a for a, b in iv):
        raise ValueError("intervals need a < b")
    return Target("intervals", intervals=iv)


def target_point(x) -> Target:
    xs = tuple(float(v) for v in np.atleast_1d(x))
    return Target("point", point=xs)


# ---------------------------------------------------------------------------
# the structure itself


@dataclass(frozen=True)
class CStructure:
    """Indexed cover family (S, {U_s}, xi, eta, psi).

    kind     : hausdorff | pressure | leaf
    backend  : tree (exact DP) | selfsimilar (scalar DP) | arc | grid
    space    : Hausdorff space tag ("interval", "cantor", "torus", "point")
    sys/phi  : dynamics behind xi for the dynamical structures
    r        : Bowen-ball radius (dynamical structures)
    chart    : leaf chart for the leaf structure
    geom     : explicit self-similar geometry (k, rho, kappa) for hausdorff
               structures outside the named spaces; xi stays 1, cells are
               k-ary words and eta = psi = kappa rho^n
    eta_override / psi_override exist so a deliberately broken gauge can be
    probed by validate_cstructure.
    """

    kind: str
    backend: str
    label: str
    space: Optional[str] = None
    sys: Optional[SystemDescriptor] = None
    phi: Optional[Potential] = None
    r: Optional[float] = None
    chart: Optional[LeafChart] = None
    geom: Optional[tuple] = None
    eta_override: Optional[Callable] = None
    psi_override: Optional[Callable] = None

    # --- gauges -----------------------------------------------------------

    def xi(self, s: CellIndex) -> float:
        if self.kind == "hausdorff":
            return 1.0
        n = s.order
        if self.phi.is_constant():
            return math.exp(n * systems.evaluate_potential_word_constant(self.sys, self.phi)) \
                if self.sys.is_shift() else \
                math.exp(-n * self.phi.t * math.log(self.sys.vol_expansion))
        if s.word is not None:
            row = np.array([s.word], dtype=np.int64)
            need = n - 1 + max(self.phi.depth, 1)
            if row.shape[1] < need:
                row = systems.lex_least_tail(self.sys, row, need - row.shape[1])
            return float(np.exp(systems.birkhoff_sum_words(self.sys, self.phi, row, n)[0]))
        coords = np.array([s.center], dtype=float)
        return float(np.exp(systems.birkhoff_sum_coords(self.sys, self.phi, coords, n)[0]))

    def eta(self, s: CellIndex) -> float:
        if self.eta_override is not None:
            return float(self.eta_override(s))
        if self.kind == "hausdorff":
            return _hausdorff_radius(self, s.order)
        return math.exp(-s.order)

    def psi(self, s: CellIndex) -> float:
        if self.psi_override is not None:
            return float(self.psi_override(s))
        if self.kind == "hausdorff":
            return _hausdorff_radius(self, s.order)
        return 1.0 / s.order

    def epsilon(self, level: int) -> float:
        """Refinement gauge at a level: max admissible psi."""
        if self.kind == "hausdorff":
            return _hausdorff_radius(self, level)
        return 1.0 / level

    # --- enumeration and membership ----------------------------------------

    def cells(self, level: int, budget: int = _ENUM_BUDGET) -> list:
        """The index stream at one refinement level (order = level)."""
        if level < 1:
            raise ValueError("level >= 1")
        if self.backend in ("tree", "selfsimilar"):
            return _tree_cells(self, level, budget)
        if self.backend == "arc":
            return _arc_cells(self, level, budget)
        return _grid_cells(self, level, budget)

    def cell_contains(self, s: CellIndex, x) -> bool:
        """Membership test for U_s; x is a word prefix, arc parameter or point."""
        if s.word is not None:
            seq = tuple(int(c) for c in np.atleast_1d(x))
            return len(seq) >= len(s.word) and seq[:len(s.word)] == s.word
        lo, hi = self.cell_interval(s)
        if self.backend == "arc":
            return lo <= float(np.atleast_1d(x)[0]) <= hi
        pt = np.atleast_1d(x)
        box = self.cell_interval(s)
        return all(b[0] <= v <= b[1] for v, b in zip(pt, box))

    def cell_interval(self, s: CellIndex):
        """The cell as an interval (arc, 1-d Hausdorff) or a box (grid)."""
        if self.backend == "arc":
            h = self.chart.cell_radius(s.order, self.r)
            return (s.center[0] - h, s.center[0] + h)
        if self.backend == "selfsimilar" and s.word is not None:
            return _selfsimilar_interval(self, s.word)
        if self.backend == "grid":
            cx, cy = s.center
            hu = self.r * self.sys.expansion ** (-(s.order - 1))
            return ((cx - self.r, cx + self.r), (cy - hu, cy + hu))
        raise ValueError(f"no interval geometry for backend {self.backend}")


# self-similar Hausdorff geometry: (branching k, ratio rho, radius scale kappa)
_HAUSDORFF_GEOM = {
    "interval": (2, 0.5, 0.5),
    "cantor": (2, 1.0 / 3.0, 0.5),
    "torus": (4, 0.5, 0.5 * math.sqrt(2.0)),
    "point": (1, 0.5, 1.0),
}


def _hausdorff_geom(struct: CStructure) -> tuple:
    return struct.geom if struct.geom is not None else _HAUSDORFF_GEOM[struct.space]


def _hausdorff_radius(struct: CStructure, level: int) -> float:
    k, rho, kappa = _hausdorff_geom(struct)
    return kappa * rho ** level


def _selfsimilar_interval(struct: CStructure, word: tuple):
    lo, width = 0.0, 1.0
    if struct.geom is not None:
        # k children of relative width rho, equally spaced to span the parent
        k, rho, _ = struct.geom
        k = int(k)
        gap = (1.0 - rho) / (k - 1) if k > 1 else 0.0
        for c in word:
            lo += c * gap * width
            width *= rho
        return (lo, lo + width)
    if struct.space == "interval":
        for c in word:
            width /= 2.0
            lo += c * width
    elif struct.space == "cantor":
        for c in word:
            width /= 3.0
            lo += (0 if c == 0 else 2) * width
    else:
        raise ValueError(f"no 1-d geometry for space {struct.space}")
    return (lo, lo + width)


def _tree_cells(struct: CStructure, level: int, budget: int) -> list:
    if struct.kind == "hausdorff":
        k, _, _ = _hausdorff_geom(struct)
        if k != int(k):
            raise ValueError(
                f"cell enumeration needs integer branching, got k={k:g}")
        k = int(k)
        if k ** level > budget:
            raise ValueError(
                f"refinement level {level} exceeds the enumerator capability "
                f"({k ** level} cells > budget {budget})")
        words = np.array(np.meshgrid(*([np.arange(k)] * level),
                                     indexing="ij")).reshape(level, -1).T \
            if level > 0 else np.zeros((1, 0), dtype=int)
        return [CellIndex(level, word=tuple(int(c) for c in w)) for w in words]
    sysd = struct.sys
    if sysd.is_shift():
        count = _admissible_count(sysd, level)
        if count > budget:
            raise ValueError(
                f"refinement level {level} exceeds the enumerator capability "
                f"({count} cells > budget {budget})")
        return [CellIndex(level, word=tuple(int(c) for c in w))
                for w in admissible_words(sysd, level)]
    # horseshoe u-strips: binary future words
    if 2 ** level > budget:
        raise ValueError(
            f"refinement level {level} exceeds the enumerator capability "
            f"({2 ** level} cells > budget {budget})")
    words = np.array(np.meshgrid(*([np.arange(2)] * level),
                                 indexing="ij")).reshape(level, -1).T
    return [CellIndex(level, word=tuple(int(c) for c in w)) for w in words]


def _admissible_count(sysd: SystemDescriptor, n: int) -> int:
    A = transition_matrix(sysd).astype(object)
    v = np.ones(sysd.p, dtype=object)
    for _ in range(n - 1):
        v = A @ v
    return int(v.sum())


def _arc_cells(struct: CStructure, level: int, budget: int) -> list:
    h = struct.chart.cell_radius(level, struct.r)
    tau = struct.chart.tau
    count = int(math.floor(2 * tau / (2 * h))) + 1
    if count > budget:
        raise ValueError(
            f"refinement level {level} exceeds the enumerator capability "
            f"({count} cells > budget {budget})")
    # centers tile [-tau, tau]; last cell clipped to keep the cover certified
    centers = -tau + h + 2 * h * np.arange(count)
    centers = np.minimum(centers, tau - h) if h <= tau else np.array([0.0])
    return [CellIndex(level, center=(float(t),)) for t in centers]


def _grid_cells(struct: CStructure, level: int, budget: int) -> list:
    r = struct.r
    hu = r * struct.sys.expansion ** (-(level - 1))
    nx = int(math.ceil(1.0 / (2 * r)))
    ny = int(math.ceil(1.0 / (2 * hu)))
    if nx * ny > budget:
        raise ValueError(
            f"refinement level {level} exceeds the enumerator capability "
            f"({nx * ny} cells > budget {budget})")
    xs = (np.arange(nx) + 0.5) * (1.0 / nx)
    ys = (np.arange(ny) + 0.5) * (1.0 / ny)
    return [CellIndex(level, center=(float(x), float(y))) for x in xs for y in ys]


# ---------------------------------------------------------------------------
# factories


def hausdorff_structure(space: str = "interval") -> CStructure:
    """Metric ball family with xi = 1 and eta = psi = the ball radius.

    Spaces: "interval" (dyadic subdivision of [0,1]), "cantor" (middle-thirds
    construction intervals), "torus" (dyadic squares), "point".
    """
    if space not in _HAUSDORFF_GEOM:
        raise ValueError(f"unknown Hausdorff space {space!r}")
    return CStructure(kind="hausdorff", backend="selfsimilar",
                      label=f"hausdorff[{space}]", space=space)


def pressure_structure(sys: SystemDescriptor, phi: Potential, r: float) -> CStructure:
    """Bowen-ball covers of the whole space: xi = e^{S_n phi}, eta = e^{-n},
    psi = 1/n.  Shifts get the exact cylinder tree (needs 1/2 < r < 1 so an
    order-n ball is exactly an n-cylinder); the cat map gets certified Bowen
    tilings of the torus, feasible only at small orders."""
    r = float(r)
    if sys.is_shift():
        if not 0.5 < r < 1.0:
            raise ValueError(f"shift Bowen covers need 1/2 < r < 1, got r={r}")
        selfsim = phi.is_constant() and sys.family == "full_shift"
        return CStructure(kind="pressure", backend="selfsimilar" if selfsim else "tree",
                          label=f"pressure[{sys.family}({sys.p})]",
                          sys=sys, phi=phi, r=r)
    if sys.family == "cat_map":
        if not 0.0 < r < 0.5:
            raise ValueError(f"torus Bowen covers need 0 < r < 1/2, got r={r}")
        return CStructure(kind="pressure", backend="grid",
                          label="pressure[cat_map]", sys=sys, phi=phi, r=r)
    if sys.family == "horseshoe":
        # u-sections: the critical exponent matches the full two-sided family
        return CStructure(kind="pressure", backend="selfsimilar",
                          label="pressure[horseshoe]", sys=sys, phi=phi, r=r)
    raise DynamicsError(f"no Bowen cover family for {sys.family}")


def leaf_structure(sys: SystemDescriptor, phi: Potential, r: float,
                   chart: Optional[LeafChart] = None) -> CStructure:
    """u-Bowen balls restricted to one unstable leaf.

    Arc charts (cat map, solenoid) require r < tau/3 so that order-n balls
    around chart points stay inside the bracket-regular neighbourhood; the
    cells are the arcs of half-width r lambda^{-(n-1)}.  On shifts the cells
    are one-sided forward cylinders (the leaf through a fixed past)."""
    r = float(r)
    if sys.is_shift():
        if not 0.5 < r < 1.0:
            raise ValueError(f"shift leaf cells need 1/2 < r < 1, got r={r}")
        selfsim = phi.is_constant() and sys.family == "full_shift"
        return CStructure(kind="leaf", backend="selfsimilar" if selfsim else "tree",
                          label=f"leaf[{sys.family}({sys.p})]",
                          sys=sys, phi=phi, r=r, chart=chart)
    if sys.family == "horseshoe":
        return CStructure(kind="leaf", backend="selfsimilar",
                          label="leaf[horseshoe]", sys=sys, phi=phi, r=r,
                          chart=chart)
    if chart is None or chart.kind != "arc":
        raise ValueError("geometric leaf structures need an arc chart")
    if not 0.0 < r < chart.tau / 3.0:
        raise ValueError(f"need 0 < r < tau/3 = {chart.tau / 3.0:.6g}, got r={r}")
    return CStructure(kind="leaf", backend="arc",
                      label=f"leaf[{sys.family}]", sys=sys, phi=phi, r=r,
                      chart=chart)


# ---------------------------------------------------------------------------
# estimates


@dataclass(frozen=True)
class CoverCandidate:
    """A concrete cover: indices (or per-order counts), its weighted value,
    the coarsest gauge used and whether coverage was verified."""

    indices: tuple
    total_weight: float
    max_psi: float
    certified: bool

    def to_dict(self) -> dict:
        idx = [s.to_dict() if isinstance(s, CellIndex)
               else {"order": int(s[0]), "count": int(s[1])} for s in self.indices]
        return {"indices": idx, "total_weight": self.total_weight,
                "max_psi": self.max_psi, "certified": self.certified}


@dataclass(frozen=True)
class OuterMeasureEstimate:
    alpha: float
    upper: float
    lower: float
    level: int
    exact: bool = False
    witness: Optional[CoverCandidate] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper + 1e-12 + 1e-9 * abs(self.upper):
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "upper": self.upper, "lower": self.lower,
                "level": self.level, "exact": self.exact,
                "witness": None if self.witness is None else self.witness.to_dict(),
                "meta": dict(self.meta)}


@dataclass(frozen=True)
class CriticalValue:
    """Critical exponent estimate: `value` is the ladder-extrapolated
    crossing, `raw` the finest finite-level crossing, `bracket` the final
    bisection interval at the finest level."""

    value: float
    raw: float
    bracket: tuple
    levels: tuple
    crossings: tuple
    threshold: float

    def to_dict(self) -> dict:
        return {"value": self.value, "raw": self.raw,
                "bracket": list(self.bracket), "levels": list(self.levels),
                "crossings": list(self.crossings), "threshold": self.threshold}


# ---------------------------------------------------------------------------
# exact tree DP
#
# Normalized per-state recursion.  For a depth-d locally constant phi the
# internal Birkhoff weight of a cylinder factors along the tree, so with
# g_n(a) := (cover value of a depth-n subtree in state a) / (internal weight
# of its root word) * e^{n alpha} the optimum satisfies
#
#   g_n = min(m, e^{-alpha} B g_{n+1}),    g_M = m       (componentwise)
#
# where B[a,b] = e^{phi(window)} over admissible state transitions and m(a)
# is the overhang factor: the cheapest completion of the d-1 windows that
# stick out past the cylinder's end.  Values are assembled in log scale.


class _TreeEngine:
    def __init__(self, sysd: SystemDescriptor, phi: Potential):
        d = max(phi.depth, 1)
        p = sysd.p
        A = transition_matrix(sysd)
        tab = np.asarray(phi.table) if phi.table is not None else np.zeros(p ** d)
        if phi.kind == "locally_constant" and phi.offset != 0:
            raise ValueError("tree covers need offset-0 locally constant weights")
        if d == 1:
            states = [(a,) for a in range(p)]
        else:
            states = [tuple(int(c) for c in w) for w in admissible_words(sysd, d - 1)]
        S = len(states)
        B = np.zeros((S, S))
        for i, si in enumerate(states):
            for j, sj in enumerate(states):
                if d == 1:
                    ok = A[si[-1], sj[-1]] > 0
                    window = sj
                else:
                    ok = si[1:] == sj[:-1] and A[si[-1], sj[-1]] > 0
                    window = si + (sj[-1],)
                if ok:
                    code = 0
                    for c in window:
                        code = code * p + c
                    B[i, j] = math.exp(tab[code])
        if not (B.sum(axis=1) > 0).all():
            raise DynamicsError("every symbol state needs an admissible successor")
        # overhang: min-weight completion over d-1 further symbols
        m = np.zeros(S)
        cur = np.zeros(S)
        for _ in range(d - 1):
            nxt = np.full(S, np.inf)
            for i in range(S):
                for j in range(S):
                    if B[i, j] > 0:
                        nxt[i] = min(nxt[i], math.log(B[i, j]) + cur[j])
            cur = nxt
        m = np.exp(cur)
        self.d, self.p, self.states = d, p, states
        self.B, self.cover = B, m
        # seed words: length max(d-1, 1); for d = 1 the seed weight is e^{phi}
        if d == 1:
            self.seed = np.array([math.exp(tab[a]) for a in range(p)])
            self.seed_len = 1
        else:
            self.seed = np.ones(S)
            self.seed_len = d - 1

    def log_value(self, alpha: float, N: int, M: int) -> float:
        """log of the exact optimum over whole-space covers with orders in
        [N, M] (cover-or-delegate on the full cylinder tree)."""
        g = self.cover.copy()
        eB = self.B * math.exp(-alpha)
        for _ in range(M - 1, N - 1, -1):
            g = np.minimum(self.cover, eB @ g)
            hi = g.max()
            if hi < 1e-280:     # deep in the subcritical regime; value is ~0
                return -np.inf
        z = self.seed.copy()
        lsh = 0.0
        for _ in range(N - self.seed_len):
            z = z @ self.B
            top = z.max()
            z /= top
            lsh += math.log(top)
        v = float(z @ g)
        return -np.inf if v <= 0 else math.log(v) + lsh - N * alpha

    def tail_tables(self, alpha: float, N: int, M: int):
        """g_n for all n in [0, M]: cover allowed only at n >= N."""
        S = len(self.states)
        G = np.zeros((M + 1, S))
        G[M] = self.cover
        eB = self.B * math.exp(-alpha)
        for n in range(M - 1, -1, -1):
            delegated = eB @ G[n + 1]
            G[n] = np.minimum(self.cover, delegated) if n >= N else delegated
        return G

    def state_of(self, word: tuple) -> int:
        key = word[-(self.d - 1):] if self.d > 1 else (word[-1],)
        return self.states.index(tuple(key))

    def word_log_weight(self, word: tuple) -> float:
        """log internal Birkhoff weight of a cylinder word (complete windows
        only; the overhang lives in the cover factor)."""
        d, p = self.d, self.p
        tab_log = np.log(np.where(self.B > 0, self.B, 1.0))
        total = 0.0
        if d == 1:
            tab = {a: math.log(self.seed[a]) for a in range(p)}
            return sum(tab[c] for c in word)
        for k in range(len(word) - d + 1):
            i = self.states.index(tuple(word[k:k + d - 1]))
            j = self.states.index(tuple(word[k + 1:k + d]))
            total += tab_log[i, j]
        return total


def _selfsimilar_params(struct: CStructure):
    """(branching k, per-branch weight w, eta ratio rho, eta scale kappa).

    Dynamical structures: eta = e^{-n} (rho = 1/e), w = e^{phi} a constant.
    Hausdorff structures: w = 1 and the geometry table supplies (k, rho, kappa).
    """
    if struct.kind == "hausdorff":
        k, rho, kappa = _hausdorff_geom(struct)
        return k, 1.0, rho, kappa
    sysd, phi = struct.sys, struct.phi
    if sysd.is_shift():
        if sysd.family != "full_shift":
            raise ValueError("self-similar path needs a full shift")
        c = systems.evaluate_potential_word_constant(sysd, phi)
        return sysd.p, math.exp(c), math.exp(-1.0), 1.0
    # horseshoe u-sections: binary branching, constant potential
    c = -phi.t * math.log(sysd.vol_expansion) if phi.kind == "geometric_t" else 0.0
    return 2, math.exp(c), math.exp(-1.0), 1.0


def _selfsimilar_log_value(struct, alpha, N, M, log_count_N, log_weight_N):
    """log V when every node looks alike: count_N cells at depth N, each of
    internal log weight log_weight_N, uniform branching below.  With
    q = k w rho^alpha the normalized cover recursion is g = min(1, q g), so
    g_N = min(1, q^{M-N}) and the value picks the cheaper of the two cuts."""
    k, w, rho, kappa = _selfsimilar_params(struct)
    logq = math.log(k) + math.log(w) + alpha * math.log(rho)
    return (log_count_N + log_weight_N
            + alpha * (math.log(kappa) + N * math.log(rho))
            + min(0.0, (M - N) * logq))


# ---------------------------------------------------------------------------
# target-restricted tree values


def _selfsimilar_cylinder_log_value(struct: CStructure, target: Target,
                                    alpha: float, N: int, M: int):
    """Cover value of a union of construction cylinders, xi = 1 throughout.

    Equal-depth unions (the measure-dimension path) collapse to
    count * (kappa rho^n)^alpha; ragged unions run the own-vs-delegated trie."""
    k, _w, rho, kappa = _selfsimilar_params(struct)
    if k != int(k):
        raise ValueError(f"cylinder targets need integer branching, got k={k:g}")
    k = int(k)
    words = target.words
    if max(len(w) for w in words) > M:
        raise ValueError("target cylinders deeper than the order cap")
    for w in words:
        if any(c < 0 or c >= k for c in w):
            raise ValueError(f"symbol out of range in target word {w}")
    logq = math.log(k) + alpha * math.log(rho)

    def subtree(n: int) -> float:
        # optimal cover of one order-n cell's descendants, orders in [max(n,N), M]
        m0 = max(n, N)
        return math.exp(alpha * (math.log(kappa) + m0 * math.log(rho))
                        + (m0 - n) * math.log(k) + min(0.0, (M - m0) * logq))

    ws = sorted(set(tuple(w) for w in words))
    lens = {len(w) for w in ws}
    if len(lens) == 1 and max(lens) <= N:
        # no admissible ancestor can merge equal-depth words at or above N
        n = lens.pop()
        return math.log(len(ws)) + math.log(subtree(n))

    pruned = []
    for w in ws:
        if not any(w[:len(u)] == u for u in pruned):
            pruned.append(w)

    def node_value(prefix: tuple) -> float:
        n = len(prefix)
        if any(prefix[:len(u)] == u for u in pruned):
            return subtree(n)
        nexts = sorted({u[n] for u in pruned if u[:n] == prefix and len(u) > n})
        delegated = sum(node_value(prefix + (b,)) for b in nexts)
        if n >= N:
            return min(subtree(n), delegated)
        return delegated

    roots = sorted({u[0] for u in pruned})
    total = sum(node_value((a,)) for a in roots)
    return -np.inf if total <= 0 else math.log(total)


def _tree_log_value_target(struct: CStructure, target: Target, alpha: float,
                           N: int, M: int):
    """Exact DP value over cylinder-union targets, in log scale."""
    if struct.kind == "hausdorff":
        return _selfsimilar_cylinder_log_value(struct, target, alpha, N, M)
    sysd, phi = struct.sys, struct.phi
    if not sysd.is_shift():
        # horseshoe u-strips = binary tree with a constant branch weight
        c = _const_geometric_value(sysd, phi)
        sysd = systems.full_shift(2)
        phi = systems.locally_constant(sysd, 1, [c, c])
    elif phi.kind != "locally_constant":
        c = systems.evaluate_potential_word_constant(sysd, phi)
        phi = systems.locally_constant(sysd, 1, [c] * sysd.p)
    eng = _TreeEngine(sysd, phi)
    words = target.words
    if max(len(w) for w in words) > M:
        raise ValueError("target cylinders deeper than the order cap")
    if eng.d > 1 and any(len(w) < eng.d - 1 for w in words):
        raise ValueError("target words shorter than the weight window")
    A = transition_matrix(sysd)
    for w in words:
        if any(c >= sysd.p for c in w):
            raise ValueError(f"symbol out of range in target word {w}")
        for a, b in zip(w[:-1], w[1:]):
            if A[a, b] == 0:
                raise DynamicsError(f"inadmissible target word {w}")
    G = eng.tail_tables(alpha, N, M)

    # trie over the target words; duplicated/nested prefixes collapse
    ws = sorted(set(words))
    pruned = []
    for w in ws:
        if not any(w[:len(u)] == u for u in pruned):
            pruned.append(w)

    def node_value(prefix: tuple) -> float:
        n = len(prefix)
        inside = any(prefix[:len(u)] == u for u in pruned)
        if inside:       # whole subtree below the prefix needs covering
            return math.exp(eng.word_log_weight(prefix) - n * alpha) \
                * G[n][eng.state_of(prefix)]
        nexts = sorted({u[n] for u in pruned if u[:n] == prefix and len(u) > n})
        delegated = sum(node_value(prefix + (b,)) for b in nexts)
        if n >= N:
            own = math.exp(eng.word_log_weight(prefix) - n * alpha) \
                * eng.cover[eng.state_of(prefix)]
            return min(own, delegated)
        return delegated

    roots = sorted({u[0] for u in pruned})
    total = sum(node_value((a,)) for a in roots)
    return -np.inf if total <= 0 else math.log(total)


def _tree_whole_log_value(struct: CStructure, alpha: float, N: int, M: int) -> float:
    if struct.backend == "selfsimilar":
        k, w, rho, kappa = _selfsimilar_params(struct)
        return _selfsimilar_log_value(struct, alpha, N, M,
                                      N * math.log(k), N * math.log(w))
    eng = _TreeEngine(struct.sys, struct.phi)
    return eng.log_value(alpha, N, M)


# ---------------------------------------------------------------------------
# geometric (arc) engine


def _arc_target_intervals(struct: CStructure, target: Target):
    tau = struct.chart.tau
    if target.kind == "all":
        return [(-tau, tau)]
    if target.kind == "intervals":
        out = []
        for a, b in target.intervals:
            a, b = max(a, -tau), min(b, tau)
            if b > a:
                out.append((a, b))
        return out
    if target.kind == "point":
        return [(target.point[0], target.point[0])]
    raise ValueError(f"target kind {target.kind!r} unsupported on arc charts")


def _arc_cell_count(struct: CStructure, n: int, a: float, b: float) -> int:
    h = struct.chart.cell_radius(n, struct.r)
    return max(int(math.ceil((b - a) / (2 * h))), 1)


def _arc_birkhoff_grid(struct: CStructure, n: int, a: float, b: float,
                       budget: int):
    """Cell centers tiling [a, b] at order n with their log xi values."""
    h = struct.chart.cell_radius(n, struct.r)
    count = _arc_cell_count(struct, n, a, b)
    if count > budget:
        raise ValueError(
            f"refinement level {n} exceeds the enumerator capability "
            f"({count} cells > budget {budget})")
    centers = a + h + 2 * h * np.arange(count)
    pts = np.array([_leaf_coords(struct.chart, t) for t in centers])
    vals = systems.birkhoff_sum_coords(struct.sys, struct.phi, pts, n)
    return centers, vals, 2 * h


def _const_geometric_value(sysd, phi) -> float:
    return -phi.t * math.log(sysd.vol_expansion) if phi.kind == "geometric_t" else 0.0


def _leaf_coords(chart: LeafChart, t: float):
    p = chart.point_at(t)
    return systems._point_coords(chart.sys, p)


def _arc_upper(struct: CStructure, target: Target, alpha: float, N: int,
               window: int, budget: int = _ENUM_BUDGET):
    """Certified cover value: best single-order tiling per component, or the
    exact marching greedy across orders when the grids stay small."""
    segs = _arc_target_intervals(struct, target)
    orders = list(range(N, N + window + 1))
    constant = struct.phi.is_constant()
    c = _const_geometric_value(struct.sys, struct.phi) if constant else 0.0
    total = 0.0
    witness = {}
    for a, b in segs:
        if b <= a:       # point target: one cell of the deepest order
            n = orders[-1]
            v = n * c if constant else \
                float(systems.birkhoff_sum_coords(
                    struct.sys, struct.phi,
                    np.array([_leaf_coords(struct.chart, a)]), n)[0])
            total += math.exp(v - n * alpha)
            witness[n] = witness.get(n, 0) + 1
            continue
        if constant:     # tiling counts suffice; no grids materialized
            best, best_n = np.inf, orders[0]
            for n in orders:
                val = _arc_cell_count(struct, n, a, b) * math.exp(n * (c - alpha))
                if val < best:
                    best, best_n = val, n
            total += best
            witness[best_n] = witness.get(best_n, 0) + \
                _arc_cell_count(struct, best_n, a, b)
            continue
        grids = {n: _arc_birkhoff_grid(struct, n, a, b, budget) for n in orders}
        best, best_n = np.inf, None
        for n in orders:
            _cs, vals, _w = grids[n]
            val = float(np.exp(vals - n * alpha).sum())
            if val < best:
                best, best_n = val, n
        if sum(len(g[0]) for g in grids.values()) <= 50_000:
            m_val, m_wit = _arc_march(grids, orders, alpha, a, b)
            if m_val < best:
                total += m_val
                for n, cnt in m_wit.items():
                    witness[n] = witness.get(n, 0) + cnt
                continue
        total += best
        witness[best_n] = witness.get(best_n, 0) + len(grids[best_n][0])
    return total, witness


def _arc_march(grids, orders, alpha, a, b):
    """Greedy left-to-right cover mixing orders by weight-per-length."""
    pos, total = a, 0.0
    counts = {}
    guard = 0
    while pos < b - 1e-15:
        best_rate, best_n = np.inf, orders[0]
        for n in orders:
            centers, vals, width = grids[n]
            i = min(int((pos - a) / width), len(centers) - 1)
            rate = math.exp(vals[i] - n * alpha) / width
            if rate < best_rate:
                best_rate, best_n = rate, n
        centers, vals, width = grids[best_n]
        i = min(int((pos - a) / width), len(centers) - 1)
        total += math.exp(vals[i] - best_n * alpha)
        counts[best_n] = counts.get(best_n, 0) + 1
        pos = a + (i + 1) * width
        guard += 1
        if guard > 10_000_000:
            raise RuntimeError("marching cover failed to terminate")
    return total, counts


def _arc_lower(struct: CStructure, target: Target, alpha: float, N: int,
               window: int, q_u: float, budget: int = _ENUM_BUDGET):
    """Packing bound: order-N separated points force distinct cover cells."""
    segs = _arc_target_intervals(struct, target)
    orders = np.arange(N, N + window + 1)
    lam = struct.sys.expansion
    spacing = 2 * struct.r * lam ** (-(N - 1))     # (N, 2r)-separation on the leaf
    constant = struct.phi.is_constant()
    c = _const_geometric_value(struct.sys, struct.phi) if constant else 0.0
    total = 0.0
    for a, b in segs:
        if b <= a:
            continue
        count = int(math.floor((b - a) / spacing)) + 1
        if constant:
            total += count * float(np.min(np.exp(orders * (c - alpha))))
            continue
        if count > budget:
            raise ValueError(
                f"refinement level {N} exceeds the enumerator capability "
                f"({count} separated points > budget {budget})")
        ts = a + spacing * np.arange(count)
        pts = np.array([_leaf_coords(struct.chart, t) for t in ts])
        vals = np.stack([systems.birkhoff_sum_coords(struct.sys, struct.phi, pts, int(n))
                         for n in orders])
        total += float(np.exp(vals - orders[:, None] * alpha).min(axis=0).sum())
    return total * math.exp(-q_u)


# ---------------------------------------------------------------------------
# grid (torus Bowen tiling) engine


def _grid_bounds(struct: CStructure, target: Target, alpha: float, N: int,
                 window: int, q_u: float, budget: int):
    if target.kind not in ("all",):
        raise ValueError(f"target kind {target.kind!r} unsupported on torus grids")
    sysd, phi, r = struct.sys, struct.phi, struct.r
    lam = sysd.expansion
    best_upper, best_n, best_count = np.inf, None, 0
    for n in range(N, N + window + 1):
        hu = r * lam ** (-(n - 1))
        nx = int(math.ceil(1.0 / (2 * r)))
        ny = int(math.ceil(1.0 / (2 * hu)))
        if nx * ny > budget:
            if best_n is None:
                raise ValueError(
                    f"refinement level {n} exceeds the enumerator capability "
                    f"({nx * ny} cells > budget {budget})")
            break
        if phi.is_constant():
            c = _const_geometric_value(sysd, phi)
            val = nx * ny * math.exp(n * (c - alpha))
        else:
            xs = (np.arange(nx) + 0.5) / nx
            ys = (np.arange(ny) + 0.5) / ny
            pts = np.array([(x, y) for x in xs for y in ys])
            vals = systems.birkhoff_sum_coords(sysd, phi, pts, n)
            val = float(np.exp(vals - n * alpha).sum())
        if val < best_upper:
            best_upper, best_n, best_count = val, n, nx * ny
    # packing: (N, 2r)-separated grid, one forced cell each
    hu = 2 * r * lam ** (-(N - 1))
    mx = max(int(math.floor(1.0 / (2 * 2 * r))), 1)
    my = max(int(math.floor(1.0 / hu)), 1)
    if phi.is_constant():
        c = _const_geometric_value(sysd, phi)
        cheapest = min(math.exp(n * (c - alpha)) for n in range(N, N + window + 1))
        lower = mx * my * cheapest * math.exp(-q_u)
    else:
        xs = (np.arange(mx) + 0.5) / mx
        ys = (np.arange(my) + 0.5) / my
        pts = np.array([(x, y) for x in xs for y in ys])
        orders = np.arange(N, N + window + 1)
        vals = np.stack([systems.birkhoff_sum_coords(sysd, phi, pts, int(n))
                         for n in orders])
        lower = float(np.exp(vals - orders[:, None] * alpha).min(axis=0).sum()) \
            * math.exp(-q_u)
    return best_upper, min(lower, best_upper), best_n, best_count


# ---------------------------------------------------------------------------
# public estimates


def outer_measure(struct: CStructure, target: Target, alpha: float, level: int,
                  window: Optional[int] = None,
                  budget: int = _ENUM_BUDGET) -> OuterMeasureEstimate:
    """Estimate of the alpha-weighted cover value of `target` at one level.

    Tree backends return the exact optimum over covers with orders in
    [level, level + window] (window defaults to `level`, i.e. orders up to
    2N).  Geometric backends return a certified upper bound (tiling or
    marching cover, window default 6) and a separated-family lower bound
    corrected by e^{-Q_u}.
    """
    alpha = float(alpha)
    if level < 1:
        raise ValueError("level >= 1")
    if target.kind == "empty":
        return OuterMeasureEstimate(alpha, 0.0, 0.0, level, exact=True,
                                    meta={"label": struct.label})
    if struct.backend in ("tree", "selfsimilar"):
        window = level if window is None else int(window)
        M = level + window
        val, witness = _tree_estimate(struct, target, alpha, level, M)
        cand = CoverCandidate(tuple(sorted(witness.items())), val, 1.0 / level
                              if struct.kind != "hausdorff"
                              else _hausdorff_radius(struct, level), True)
        return OuterMeasureEstimate(alpha, val, val, level, exact=True,
                                    witness=cand,
                                    meta={"label": struct.label, "order_cap": M})
    window = 6 if window is None else int(window)
    q_u = 0.0 if struct.phi.is_constant() else \
        bowen_distortion_constant(struct.sys, struct.phi, n=level, pairs=64).q_u
    if struct.backend == "arc":
        upper, wit = _arc_upper(struct, target, alpha, level, window, budget)
        lower = min(_arc_lower(struct, target, alpha, level, window, q_u, budget),
                    upper)
        cand = CoverCandidate(tuple(sorted(wit.items())), upper, 1.0 / level, True)
        return OuterMeasureEstimate(alpha, upper, lower, level, exact=False,
                                    witness=cand,
                                    meta={"label": struct.label, "q_u": q_u,
                                          "order_cap": level + window})
    upper, lower, n_used, count = _grid_bounds(struct, target, alpha, level,
                                               window, q_u, budget)
    cand = CoverCandidate(((n_used, count),), upper, 1.0 / level, True)
    return OuterMeasureEstimate(alpha, upper, lower, level, exact=False,
                                witness=cand,
                                meta={"label": struct.label, "q_u": q_u,
                                      "order_cap": level + window})


def _tree_estimate(struct: CStructure, target: Target, alpha: float,
                   N: int, M: int):
    if target.kind == "all":
        logv = _tree_whole_log_value(struct, alpha, N, M)
        val = math.exp(logv) if logv > -700 else 0.0
        return val, _witness_counts(struct, alpha, N, M, None)
    if target.kind == "cylinders":
        if struct.kind == "hausdorff":
            raise ValueError("cylinder targets need a dynamical structure")
        logv = _tree_log_value_target(struct, target, alpha, N, M)
        val = math.exp(logv) if logv > -700 else 0.0
        return val, {}
    if target.kind in ("intervals", "point"):
        if struct.kind != "hausdorff" or struct.space not in ("interval", "cantor"):
            raise ValueError(
                f"interval targets need a 1-d Hausdorff structure, not {struct.label}")
        return _hausdorff_interval_value(struct, target, alpha, N, M), {}
    raise ValueError(f"target kind {target.kind!r} unsupported")


def _witness_counts(struct, alpha, N, M, target):
    """Per-order cell counts of the optimal whole-space cut (tree backends)."""
    if struct.backend == "selfsimilar":
        k, w, rho, kappa = _selfsimilar_params(struct)
        logq = math.log(k * w) + alpha * math.log(rho)
        order = N if logq >= 0 else M       # shallow cut if delegation loses
        return {order: int(min(k ** min(order, 40), 10 ** 12))}
    eng = _TreeEngine(struct.sys, struct.phi)
    g = eng.cover.copy()
    eB = eng.B * math.exp(-alpha)
    cut = {}
    take = []
    for n in range(M - 1, N - 1, -1):
        delegated = eB @ g
        covered = eng.cover <= delegated + 1e-300
        take.append(covered)
        g = np.minimum(eng.cover, delegated)
    take.reverse()      # take[i] = cover decisions at depth N + i
    live = np.ones(len(eng.states))
    for _ in range(N - eng.seed_len):
        live = live @ (eng.B > 0)
    for i, covered in enumerate(take):
        chosen = np.where(covered, live, 0.0)
        c = chosen.sum()
        if c > 0:
            cut[N + i] = int(min(c, 10 ** 12))
        live = np.where(covered, 0.0, live) @ (eng.B > 0)
    rest = live.sum()
    if rest > 0:
        cut[M] = int(min(rest, 10 ** 12))
    return cut


def _hausdorff_interval_value(struct: CStructure, target: Target, alpha: float,
                              N: int, M: int) -> float:
    """Exact DP over dyadic/triadic cells meeting an interval-union target."""
    k, rho, kappa = _hausdorff_geom(struct)
    k = int(k)
    if target.kind == "point":
        return (kappa * rho ** M) ** alpha
    segs = target.intervals
    logq = math.log(k) + alpha * math.log(rho)
    # value of a full subtree rooted at depth n (per cell, no xi weights)
    def full_cell(n: int) -> float:
        return (kappa * rho ** n) ** alpha * math.exp(min(0.0, (M - n) * logq))

    def covers(lo: float, hi: float) -> bool:
        return any(a <= lo and hi <= b for a, b in segs)

    def meets(lo: float, hi: float) -> bool:
        return any(a < hi and lo < b for a, b in segs)

    def node(word: tuple) -> float:
        n = len(word)
        lo, hi = _selfsimilar_interval(struct, word)
        if not meets(lo, hi):
            return 0.0
        if covers(lo, hi) and n >= N:
            return full_cell(n)
        if n == M:
            return (kappa * rho ** M) ** alpha
        delegated = sum(node(word + (c,)) for c in range(k))
        if n >= N:
            return min((kappa * rho ** n) ** alpha, delegated)
        return delegated

    return node(())


def critical_value(struct: CStructure, target: Target = None,
                   bracket: tuple = (0.0, 2.0), tol: float = 1e-10,
                   threshold: float = 1.0, max_iter: int = 40,
                   levels: Optional[Sequence[int]] = None,
                   window: Optional[int] = None) -> CriticalValue:
    """Bisect the exponent where the cover value crosses `threshold`.

    The crossing at a finite level sits O(1/N) from the true critical value;
    a ladder of levels is bisected and the crossings are extrapolated
    polynomially in 1/N (tree default (300, 600, 900), geometric (6, 9, 12)).
    Bracket endpoints must straddle the threshold at the finest level.
    """
    target = target_all() if target is None else target
    if target.kind == "empty":
        raise ValueError("critical value of the empty set is undefined")
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if levels is None:
        levels = (300, 600, 900) if struct.backend in ("tree", "selfsimilar") \
            else (6, 9, 12)
    levels = tuple(int(n) for n in levels)
    logtheta = math.log(threshold)

    geo_window = 6 if window is None else int(window)

    def log_val(alpha: float, N: int) -> float:
        if struct.backend in ("tree", "selfsimilar"):
            M = N + (N if window is None else window)
            if target.kind == "all":
                return _tree_whole_log_value(struct, alpha, N, M)
            if target.kind == "cylinders":
                return _tree_log_value_target(struct, target, alpha, N, M)
            v = _hausdorff_interval_value(struct, target, alpha, N, M)
            return math.log(v) if v > 0 else -np.inf
        if struct.backend == "arc":
            upper, _wit = _arc_upper(struct, target, alpha, N, geo_window)
            return math.log(upper) if upper > 0 else -np.inf
        upper, _lo, _n, _c = _grid_bounds(struct, target, alpha, N, geo_window,
                                          0.0, _ENUM_BUDGET)
        return math.log(upper) if upper > 0 else -np.inf

    lo, hi = float(bracket[0]), float(bracket[1])
    fin = levels[-1]
    side_lo = log_val(lo, fin) >= logtheta
    side_hi = log_val(hi, fin) >= logtheta
    if side_lo == side_hi:
        raise ValueError(
            f"no bracket: cover value at alpha={lo:.6g} and alpha={hi:.6g} "
            f"falls on the same side of threshold {threshold:g}")

    crossings = []
    final_bracket = (lo, hi)
    for N in levels:
        a, b = lo, hi
        for _ in range(max_iter):
            if b - a < tol:
                break
            mid = 0.5 * (a + b)
            if (log_val(mid, N) >= logtheta) == side_lo:
                a = mid
            else:
                b = mid
        crossings.append(0.5 * (a + b))
        final_bracket = (a, b)

    value = _neville(1.0 / np.array(levels, dtype=float), np.array(crossings)) \
        if len(levels) > 1 else crossings[-1]
    return CriticalValue(float(value), crossings[-1], final_bracket,
                         levels, tuple(crossings), threshold)


def _neville(xs: np.ndarray, ys: np.ndarray) -> float:
    """Polynomial extrapolation of (xs, ys) to x = 0."""
    ys = ys.astype(float).copy()
    n = len(xs)
    for k in range(1, n):
        ys[:n - k] = (ys[1:n - k + 1] * xs[:n - k] - ys[:n - k] * xs[k:]) \
            / (xs[:n - k] - xs[k:])
    return float(ys[0])


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class StructureReport:
    passed: bool
    violations: tuple
    checked: dict

    def to_dict(self) -> dict:
        return {"passed": self.passed, "violations": list(self.violations),
                "checked": dict(self.checked)}


def validate_cstructure(struct: CStructure,
                        levels: Sequence[int] = (1, 2, 4, 8, 16, 32),
                        deltas: Sequence[float] = (0.5, 0.1, 0.01),
                        samples: int = 64,
                        budget: int = _ENUM_BUDGET,
                        seed: int = 0) -> StructureReport:
    """Probe the structure axioms at finitely many levels.

    A1: enumerated cells (all nonempty by construction) have eta > 0 and
        psi > 0.
    A2: for each probed delta some probed level forces eta <= delta; the
        witnessing epsilon is that level's max psi.
    A3: each probed level's cells cover the space with psi <= epsilon(level);
        levels whose enumeration exceeds the budget are covered by the tree
        construction itself and recorded as structural.
    """
    if not levels:
        raise ValueError("probe schedule must be nonempty")
    rng = np.random.default_rng(seed)
    violations = []
    eta_by_level = {}
    checked = {"levels": list(levels), "deltas": list(deltas), "cells": 0}

    for lv in levels:
        try:
            cells = struct.cells(lv, budget=budget)
        except ValueError:
            checked[f"level_{lv}"] = "structural"
            eta_by_level[lv] = (struct.eta(_probe_cell(struct, lv)),
                                struct.psi(_probe_cell(struct, lv)))
            continue
        if len(cells) > samples:
            idx = rng.choice(len(cells), size=samples, replace=False)
            probe = [cells[i] for i in idx]
        else:
            probe = cells
        checked["cells"] += len(probe)
        etas = [struct.eta(s) for s in probe]
        psis = [struct.psi(s) for s in probe]
        for s, e, p in zip(probe, etas, psis):
            if e <= 0 or p <= 0:
                violations.append({"condition": "A1", "level": lv,
                                   "cell": s.to_dict(), "eta": e, "psi": p})
        eta_by_level[lv] = (max(etas), max(psis))
        gap = _cover_gap(struct, lv, cells)
        if gap > 1e-9:
            violations.append({"condition": "A3", "level": lv, "gap": gap})
        if max(psis) > struct.epsilon(lv) + 1e-12:
            violations.append({"condition": "A3", "level": lv,
                               "max_psi": max(psis),
                               "epsilon": struct.epsilon(lv)})

    for delta in deltas:
        ok = [lv for lv, (e, _p) in eta_by_level.items() if e <= delta]
        if not ok:
            deepest = max(eta_by_level)
            violations.append({
                "condition": "A2", "delta": delta,
                "max_eta_at_deepest": eta_by_level[deepest][0],
                "deepest_level": deepest})
        else:
            checked[f"A2_delta_{delta:g}"] = {"epsilon": eta_by_level[min(ok)][1]}

    return StructureReport(not violations, tuple(violations), checked)


def _probe_cell(struct: CStructure, level: int) -> CellIndex:
    if struct.backend in ("tree", "selfsimilar"):
        if struct.kind == "hausdorff":
            return CellIndex(level, word=(0,) * level)
        w = [0]
        A = transition_matrix(struct.sys) if struct.sys.is_shift() else None
        for _ in range(level - 1):
            w.append(int(np.argmax(A[w[-1]])) if A is not None else 0)
        return CellIndex(level, word=tuple(w))
    if struct.backend == "arc":
        return CellIndex(level, center=(0.0,))
    return CellIndex(level, center=(0.5, 0.5))


def _cover_gap(struct: CStructure, level: int, cells: list) -> float:
    """How much of the space the level's cells fail to cover (0 = covered)."""
    if struct.backend in ("tree", "selfsimilar"):
        if struct.kind == "hausdorff":
            k, _, _ = _hausdorff_geom(struct)
            return 0.0 if len(cells) == int(k) ** level else 1.0
        expected = _admissible_count(struct.sys, level) if struct.sys.is_shift() \
            else 2 ** level
        return 0.0 if len(cells) == expected else 1.0
    if struct.backend == "arc":
        h = struct.chart.cell_radius(level, struct.r)
        lo = min(s.center[0] for s in cells) - h
        hi = max(s.center[0] for s in cells) + h
        spacing = np.diff(sorted(s.center[0] for s in cells))
        worst = max(spacing.max() - 2 * h if len(spacing) else 0.0, 0.0)
        return max(worst, lo - (-struct.chart.tau), struct.chart.tau - hi, 0.0)
    xs = sorted({s.center[0] for s in cells})
    ys = sorted({s.center[1] for s in cells})
    hu = struct.r * struct.sys.expansion ** (-(level - 1))
    gx = max(np.diff(np.array(xs + [xs[0] + 1.0])).max() - 2 * struct.r, 0.0)
    gy = max(np.diff(np.array(ys + [ys[0] + 1.0])).max() - 2 * hu, 0.0)
    return max(gx, gy)
