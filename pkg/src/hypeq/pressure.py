"""Partition sums over spanning/separated/periodic sets and pressure estimates.

Separated sets are built greedily (first point in lexicographic order, then
sieve), which makes them simultaneously spanning for their sample; shifts at
r in (1/2, 1) get exact cylinder witnesses.  Exact symbolic pressures come
from transfer-operator eigendata.  Finite-n brackets follow the
almost-multiplicativity route: Z_{n+m} <= C Z_n Z_m forces
P <= (1/n) log(C Z_n) for every n, and the mirrored bound gives the other
side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from hypeq import systems
from hypeq.systems import (
    DynamicsError, LeafChart, Potential, SymbolWord, SystemDescriptor,
)

__all__ = [
    "PartitionSumRecord", "PressureEstimate", "SftEigendata",
    "separated_set", "leaf_sample", "global_sample", "partition_sum",
    "pressure_estimate", "sft_exact_pressure", "periodic_points",
    "periodic_orbit_measure", "multiplicativity_check",
    "MultiplicativityReport", "DistortionBounds",
    "bowen_distortion_constant",
]


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class PartitionSumRecord:
    n: int
    r: float
    variant: str                 # "span" | "sep" | "per"
    value: float
    count: int                   # witness set size
    domain: str                  # "Lambda" or a leaf-ball descriptor
    system: str
    potential: str

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("partition sums are positive")

    def to_dict(self) -> dict:
        return {"n": self.n, "r": self.r, "variant": self.variant,
                "value": self.value, "count": self.count,
                "domain": self.domain, "system": self.system,
                "potential": self.potential}


@dataclass(frozen=True)
class PressureEstimate:
    value: float
    r: float
    n_lo: int
    n_hi: int
    lower: float                 # from Z_n <= C e^{nP}
    upper: float                 # from Z_n >= C^{-1} e^{nP}
    slope_residual: float
    log_values: tuple            # (n, log Z_n) pairs
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        return {"value": self.value, "r": self.r,
                "n_range": [self.n_lo, self.n_hi],
                "lower": self.lower, "upper": self.upper,
                "slope_residual": self.slope_residual,
                "log_values": [list(p) for p in self.log_values],
                "warning": self.warning}


@dataclass(frozen=True, eq=False)
class SftEigendata:
    """log spectral radius plus Perron eigendata of the weighted operator.

    gibbs_lo/gibbs_hi bound mu(C_n(w)) / e^{-nP + S_n phi(x)} over all
    cylinders and all points x in them.
    """
    value: float                 # P = log rho
    rho: float
    block_length: int            # s: states are s-blocks
    states: tuple                # admissible s-blocks, lex order
    matrix: np.ndarray           # weighted operator M[a, b]
    left: np.ndarray             # v M = rho v
    right: np.ndarray            # M h = rho h, normalized sum(v h) = 1
    gibbs_lo: float
    gibbs_hi: float

    def to_dict(self) -> dict:
        return {"value": self.value, "rho": self.rho,
                "block_length": self.block_length,
                "states": [list(s) for s in self.states],
                "left": self.left.tolist(), "right": self.right.tolist(),
                "gibbs_lo": self.gibbs_lo, "gibbs_hi": self.gibbs_hi}


def _sys_tag(sys: SystemDescriptor) -> str:
    if sys.family == "horseshoe":
        return f"horseshoe(a={sys.alpha:g},b={sys.beta:g})"
    if sys.is_shift():
        return f"{sys.family}(p={sys.p})"
    return sys.family


def _phi_tag(phi: Potential) -> str:
    if phi.kind == "zero":
        return "zero"
    if phi.kind == "geometric_t":
        return f"geo(t={phi.t:g})"
    if phi.kind == "locally_constant":
        return f"locconst(depth={phi.depth},offset={phi.offset})"
    return "tabulated"


# ---------------------------------------------------------------------------
# separated sets


def separated_set(sys: SystemDescriptor, sample: Sequence, n: int, r: float) -> list:
    """Greedy maximal (n, r)-separated subset of `sample` (which it spans).

    Candidates are visited in lexicographic coordinate order (insertion
    order breaks exact ties); a point enters iff its d_n-distance to every
    chosen point is >= r.
    """
    if n < 1 or r <= 0:
        raise ValueError("need n >= 1 and r > 0")
    pts = list(sample)
    if not pts:
        raise ValueError("empty sample")
    if sys.is_shift():
        return _separated_words(sys, pts, n, r)
    coords = np.array([systems._point_coords(sys, p) for p in pts], dtype=float)
    order = np.lexsort(coords.T[::-1])
    keep = _separated_sieve(sys, coords[order], n, r)
    return [pts[i] for i in order[keep]]


def _separated_sieve(sys: SystemDescriptor, coords: np.ndarray, n: int,
                     r: float) -> np.ndarray:
    blocks = systems.orbit_coords(sys, coords, n)
    m = len(coords)
    alive = np.ones(m, dtype=bool)
    idx = np.arange(m)
    chosen = []
    while alive.any():
        i = idx[alive][0]
        chosen.append(i)
        alive[i] = False
        rest = idx[alive]
        if len(rest) == 0:
            break
        d = systems.dyn_metric_blocks(sys, blocks[rest], blocks[i][None, :, :])
        alive[rest[d < r]] = False
    return np.array(chosen, dtype=int)


def _separated_words(sys: SystemDescriptor, pts: Sequence, n: int, r: float) -> list:
    """Dedup by the coordinate window that decides d_n >= r.

    d(sigma^k x, sigma^k y) = 2^{-min|i|: x_{k+i} != y_{k+i}}, so d_n >= r
    iff the words differ somewhere in [-e, n + e) with e = floor(log2(1/r)).
    """
    if not (0.0 < r < 1.0):
        raise DynamicsError("shift separation needs r in (0, 1)")
    e = int(math.floor(math.log2(1.0 / r)))
    seen = set()
    out = []
    for p in pts:
        key = tuple(p.coord(i) for i in range(-e, n + e))
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


def leaf_sample(chart: LeafChart, n: int, r: float, per_ball: float = 4.0) -> list:
    """Chart sample dense enough that every (n, r)-ball holds >= per_ball points."""
    sys = chart.sys
    if chart.kind == "arc":
        h = chart.cell_radius(n, r) / per_ball
        m = int(math.floor(2 * chart.tau / h)) + 1
        ts = -chart.tau + h * np.arange(m)
        return [chart.point_at(float(t)) for t in ts]
    if sys.family == "horseshoe":
        pad = max(1, math.ceil(math.log(per_ball / r) / math.log(sys.beta)))
        words = systems.admissible_words(systems.full_shift(2), n + pad)
        return [chart.point_at(tuple(int(c) for c in w)) for w in words]
    raise ValueError("no sampler for this chart kind")


def global_sample(sys: SystemDescriptor, n: int, r: float,
                  per_ball: float = 4.0) -> list:
    """Phase-space-wide sample with >= per_ball points per (n, r)-ball."""
    if sys.is_shift():
        words = systems.admissible_words(sys, n)
        return [SymbolWord(sys.p, tuple(int(c) for c in w)) for w in words]
    if sys.family == "cat_map":
        lam = sys.expansion
        h = r * lam ** (-(n - 1) / 2.0) / math.sqrt(per_ball)
        m = int(math.ceil(1.0 / h))
        xs = (np.arange(m) + 0.5) / m
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        return [systems.TorusPoint(float(a), float(b)) for a, b in grid]
    if sys.family == "horseshoe":
        pad = max(1, math.ceil(math.log(per_ball / r) / math.log(sys.beta)))
        fut = systems.admissible_words(systems.full_shift(2), n + pad)
        pas = systems.admissible_words(systems.full_shift(2), pad)
        out = []
        for f in fut:
            fw = tuple(int(c) for c in f)
            for q in pas:
                out.append(systems.horseshoe_point(sys, fw, tuple(int(c) for c in q)))
        return out
    raise DynamicsError("no global sampler for this family")


# ---------------------------------------------------------------------------
# partition sums


def partition_sum(sys: SystemDescriptor, phi: Potential, n: int, r: float,
                  variant: str = "sep", domain=None,
                  sample: Optional[Sequence] = None) -> PartitionSumRecord:
    """Z_n over an (n, r) witness set.

    `domain` is None for all of Λ or a LeafChart for a leaf ball; `sample`
    overrides the default domain sampling.  Span and Sep share the greedy
    witness set — a maximal separated set is spanning — so their values
    agree by construction and the e^{±Q_u} comparison is a sanity bound.
    Per sums over exact periodic-point enumerations.
    """
    variant = variant.lower()
    if variant not in ("span", "sep", "per"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "per":
        if domain is not None:
            raise DynamicsError("periodic sums are phase-space-wide")
        pts = periodic_points(sys, n)
        if sys.is_shift():
            pts = [_tile_word(sys, p, n, _reach(phi) + n) for p in pts]
        val = _sum_weights(sys, phi, pts, n)
        return PartitionSumRecord(n, r, variant, val, len(pts), "Lambda",
                                  _sys_tag(sys), _phi_tag(phi))

    if sys.is_shift():
        if not (0.5 < r < 1.0):
            raise DynamicsError("shift partition sums use r in (1/2, 1), "
                                "where depth-n cylinders are exact witnesses")
        words = systems.admissible_words(sys, n)
        padded = systems.lex_least_tail(sys, words, max(0, _reach(phi) - 1))
        vals = systems.birkhoff_sum_words(sys, phi, padded, n)
        val = float(np.exp(vals).sum())
        return PartitionSumRecord(n, r, variant, val, len(words), "Lambda",
                                  _sys_tag(sys), _phi_tag(phi))

    if isinstance(domain, LeafChart) and domain.kind == "arc" and phi.is_constant():
        # arithmetic fast path: witnesses are an h-grid on the arc
        h = domain.cell_radius(n, r)
        count = int(math.floor(2 * domain.tau / h)) + 1
        c = systems.evaluate_potential(sys, phi, domain.base)
        return PartitionSumRecord(n, r, variant, count * math.exp(n * c), count,
                                  _domain_tag(domain), _sys_tag(sys), _phi_tag(phi))

    if sample is None:
        sample = (leaf_sample(domain, n, r) if isinstance(domain, LeafChart)
                  else global_sample(sys, n, r))
    witnesses = separated_set(sys, sample, n, r)
    val = _sum_weights(sys, phi, witnesses, n)
    return PartitionSumRecord(n, r, variant, val, len(witnesses),
                              _domain_tag(domain), _sys_tag(sys), _phi_tag(phi))


def _reach(phi: Potential) -> int:
    return phi.depth if phi.kind == "locally_constant" else 0


def _tile_word(sys: SystemDescriptor, p: SymbolWord, period: int,
               width: int) -> SymbolWord:
    reps = max(1, -(-width // period))
    return SymbolWord(sys.p, tuple(p.symbols) * reps)


def _domain_tag(domain) -> str:
    if domain is None:
        return "Lambda"
    base = domain.base
    if hasattr(base, "x"):
        parts = [f"{base.x:.6g}", f"{base.y:.6g}"]
        if hasattr(base, "theta"):
            parts.append(f"{base.theta:.6g}")
        return f"B^u(({', '.join(parts)}), {domain.tau:g})"
    return f"B^u(word, {domain.tau:g})"


def _sum_weights(sys: SystemDescriptor, phi: Potential, pts: Sequence,
                 n: int) -> float:
    if not pts:
        raise DynamicsError("empty witness set")
    if phi.is_constant():
        c = systems.evaluate_potential(sys, phi, pts[0])
        return len(pts) * math.exp(n * c)
    if sys.is_shift():
        width = n + max(_reach(phi) - 1, 0)
        rows = []
        for p in pts:
            row = [p.coord(i) for i in range(width)]
            if any(c is None for c in row):
                raise DynamicsError("witness window too short for S_n phi")
            rows.append(row)
        vals = systems.birkhoff_sum_words(sys, phi, np.asarray(rows), n)
        return float(np.exp(vals).sum())
    coords = np.array([systems._point_coords(sys, p) for p in pts])
    vals = systems.birkhoff_sum_coords(sys, phi, coords, n)
    return float(np.exp(vals).sum())


# ---------------------------------------------------------------------------
# pressure estimation


def pressure_estimate(sys: SystemDescriptor, phi: Potential, r: float,
                      n_range: Sequence[int], domain=None,
                      variant: str = "sep") -> PressureEstimate:
    """Least-squares slope of log Z_n over the top half of `n_range`."""
    ns = sorted(set(int(n) for n in n_range))
    if len(ns) < 4:
        raise ValueError("n range needs length >= 4")
    records = {n: partition_sum(sys, phi, n, r, variant, domain) for n in ns}
    logz = {n: math.log(records[n].value) for n in ns}

    top = ns[len(ns) // 2:]
    A = np.stack([np.array(top, dtype=float), np.ones(len(top))], axis=1)
    y = np.array([logz[n] for n in top])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    slope_residual = float(np.abs(A @ np.array([slope, intercept]) - y).max())

    defect = 1.0
    for n in ns:
        for m in ns:
            if m >= n and n + m in logz:
                gap = logz[n + m] - logz[n] - logz[m]
                defect = max(defect, math.exp(abs(gap)))
    logc = math.log(defect)
    lower = max((logz[n] - logc) / n for n in ns)
    upper = min((logz[n] + logc) / n for n in ns)

    warning = None
    if upper < lower:
        warning = "bracket inversion: defect constant not yet stabilized"
        lower, upper = upper, lower
    if not (lower - 1e-12 <= slope <= upper + 1e-12):
        warning = ((warning + "; ") if warning else "") + \
            "ill-conditioned-estimate: slope escapes the Fekete bracket"
        lower = min(lower, float(slope))
        upper = max(upper, float(slope))

    return PressureEstimate(float(slope), r, ns[0], ns[-1], lower, upper,
                            slope_residual,
                            tuple((n, logz[n]) for n in ns), warning)


# ---------------------------------------------------------------------------
# exact symbolic pressure


def sft_exact_pressure(sys: SystemDescriptor, phi: Potential) -> SftEigendata:
    """Pressure and Perron eigendata of the weighted transition operator.

    States are the admissible s-blocks, s = max(depth-1, 1); the edge
    w -> w' (overlap-compatible, last transition admissible) carries weight
    e^{phi(w extended by the last symbol of w')}.
    """
    if not sys.is_shift():
        raise ValueError("exact pressure is symbolic")
    if phi.kind == "zero":
        phi = systems.locally_constant(sys, 1, [0.0] * sys.p)
    elif phi.kind == "geometric_t":
        c = -phi.t * math.log(sys.vol_expansion)
        phi = systems.locally_constant(sys, 1, [c] * sys.p)
    if phi.kind != "locally_constant" or phi.offset != 0:
        raise ValueError("exact pressure needs an offset-0 locally constant phi")

    A = np.asarray(systems.transition_matrix(sys))
    _check_irreducible(A)
    s = max(phi.depth - 1, 1)
    states = tuple(tuple(int(c) for c in w)
                   for w in systems.admissible_words(sys, s))
    index = {w: i for i, w in enumerate(states)}
    table = np.asarray(phi.table)

    def phi_of(block) -> float:
        code = 0
        for c in block[:phi.depth]:
            code = code * sys.p + c
        return float(table[code])

    k = len(states)
    M = np.zeros((k, k))
    for i, w in enumerate(states):
        for b in range(sys.p):
            if not A[w[-1], b]:
                continue
            j = index.get(w[1:] + (b,))
            if j is not None:
                M[i, j] = math.exp(phi_of(w + (b,)))

    rho, h = _perron(M)
    _, v = _perron(M.T)
    v = v / float(v @ h)
    lo, hi = _gibbs_ratio_bounds(sys, phi, s, states, index, v, h, rho, A)
    return SftEigendata(math.log(rho), rho, s, states, M, v, h, lo, hi)


def _perron(M: np.ndarray) -> tuple:
    eigvals, eigvecs = np.linalg.eig(M)
    i0 = int(np.argmax(eigvals.real))
    rho = float(eigvals[i0].real)
    h = eigvecs[:, i0].real
    h = h if h[np.argmax(np.abs(h))] > 0 else -h
    if rho <= 0 or (h < -1e-12).any():
        raise DynamicsError("Perron data not positive; is the matrix irreducible?")
    return rho, np.maximum(h, 1e-300)


def _gibbs_ratio_bounds(sys, phi, s, states, index, v, h, rho, A) -> tuple:
    """Exact min/max of mu(C_n(w)) / e^{-nP + S_n phi(x)} over cylinders/points.

    mu(C_n) = v_{B_0} h_{B_{n-s}} e^{S_{n-s} phi} rho^{-(n-s)}, so the ratio
    is v_{B_0} * [h_B rho^s e^{-(S_s phi along the continuation of B)}]; the
    first factor ranges over states, the bracket over states and admissible
    s-step continuations.
    """
    tail_lo, tail_hi = math.inf, -math.inf
    for i, B in enumerate(states):
        for cont in _continuations(sys, A, B, s + max(phi.depth - 1, 0)):
            ext = B + cont
            ssum = sum(_phi_window(phi, sys.p, ext, j) for j in range(s))
            val = h[i] * rho ** s * math.exp(-ssum)
            tail_lo = min(tail_lo, val)
            tail_hi = max(tail_hi, val)
    lo = float(v.min() * tail_lo)
    hi = float(v.max() * tail_hi)
    return lo, hi


def _phi_window(phi: Potential, p: int, word, j: int) -> float:
    code = 0
    for c in word[j:j + phi.depth]:
        code = code * p + c
    return float(phi.table[code])


def _continuations(sys, A, B, length: int):
    """All admissible continuations of block B by `length` symbols."""
    outs = [()]
    for _ in range(length):
        nxt = []
        for tail in outs:
            last = (B + tail)[-1]
            for b in range(sys.p):
                if A[last, b]:
                    nxt.append(tail + (b,))
        outs = nxt
    return outs


def _check_irreducible(A: np.ndarray):
    p = len(A)
    reach = np.eye(p, dtype=bool)
    step = A.astype(bool)
    for _ in range(p):
        reach = reach | (reach @ step)
    if not reach.all():
        a, b = np.argwhere(~reach)[0]
        raise DynamicsError(
            f"transition matrix is reducible: symbol {a} never reaches symbol {b}")


# ---------------------------------------------------------------------------
# periodic points


def periodic_points(sys: SystemDescriptor, n: int) -> list:
    """Exact enumeration of Per_n = {x : f^n x = x}."""
    if n < 1:
        raise ValueError("n >= 1")
    if sys.family == "cat_map":
        return _cat_periodic(n)
    if sys.family == "horseshoe":
        words = systems.admissible_words(systems.full_shift(2), n)
        reps = max(2, -(-64 // n))
        out = []
        for w in words:
            tup = tuple(int(c) for c in w)
            tiled = tup * reps
            out.append(systems.horseshoe_point(sys, tiled, tiled[::-1]))
        return out
    if sys.is_shift():
        words = systems.admissible_words(sys, n)
        A = np.asarray(systems.transition_matrix(sys))
        return [SymbolWord(sys.p, tuple(int(c) for c in w))
                for w in words if A[int(w[-1]), int(w[0])]]
    raise DynamicsError("unsupported-variant: periodic enumeration is exact "
                        "only for CatMap, shifts, and the horseshoe")


def _cat_periodic(n: int) -> list:
    L = np.array([[2, 1], [1, 1]], dtype=object)
    Ln = np.eye(2, dtype=object)
    for _ in range(n):
        Ln = Ln @ L
    M = Ln - np.eye(2, dtype=object)
    d1, d2, C = _smith_2x2(M)
    d1, d2 = abs(int(d1)), abs(int(d2))
    det = d1 * d2
    if det == 0:
        raise DynamicsError("degenerate period: L^n - I is singular")
    pts = []
    for a in range(d1):
        for b in range(d2):
            num = C @ np.array([a * (det // d1), b * (det // d2)], dtype=object)
            pts.append(systems.TorusPoint((int(num[0]) % det) / det,
                                          (int(num[1]) % det) / det))
    return pts


def _smith_2x2(M) -> tuple:
    """Diagonalize an integer 2x2 matrix: R M C = diag(d1, d2).

    Only C is tracked: solutions of Mx ≡ 0 (mod Z^2) in [0,1)^2 are
    x = C (a/d1, b/d2) mod 1.  Divisibility d1 | d2 is not enforced — any
    unimodular diagonalization enumerates the kernel.
    """
    A = [[int(M[0, 0]), int(M[0, 1])], [int(M[1, 0]), int(M[1, 1])]]
    C = [[1, 0], [0, 1]]

    def swap_rows():
        A[0], A[1] = A[1], A[0]

    def swap_cols():
        for row in A:
            row[0], row[1] = row[1], row[0]
        for row in C:
            row[0], row[1] = row[1], row[0]

    def row_sub(q):     # row1 -= q * row0
        A[1][0] -= q * A[0][0]
        A[1][1] -= q * A[0][1]

    def col_sub(q):     # col1 -= q * col0
        A[0][1] -= q * A[0][0]
        A[1][1] -= q * A[1][0]
        C[0][1] -= q * C[0][0]
        C[1][1] -= q * C[1][0]

    for _ in range(256):
        if A[0][0] == 0:
            if A[1][0] != 0:
                swap_rows()
            elif A[0][1] != 0:
                swap_cols()
            elif A[1][1] != 0:
                swap_rows()
                swap_cols()
            else:
                break
            continue
        if A[1][0] != 0:
            q = A[1][0] // A[0][0]
            row_sub(q)
            if A[1][0] != 0:
                swap_rows()
            continue
        if A[0][1] != 0:
            q = A[0][1] // A[0][0]
            col_sub(q)
            if A[0][1] != 0:
                swap_cols()
            continue
        break
    return A[0][0], A[1][1], np.array(C, dtype=object)


def periodic_orbit_measure(sys: SystemDescriptor, phi: Potential, n: int):
    """Probability measure (1/Z^per_n) Σ_{x ∈ Per_n} e^{S_n phi(x)} δ_x."""
    from hypeq.equilibrium import empirical_from_points
    pts = periodic_points(sys, n)
    if not pts:
        raise DynamicsError("empty periodic set")
    if sys.is_shift():
        width = max(n + max(_reach(phi) - 1, 0), 12)
        pts = [_tile_word(sys, p, n, width) for p in pts]
    if phi.is_constant():
        w = np.ones(len(pts))
    elif sys.is_shift():
        rows = np.array([[p.coord(i) for i in range(n + max(_reach(phi) - 1, 0))]
                         for p in pts])
        w = np.exp(systems.birkhoff_sum_words(sys, phi, rows, n))
    else:
        coords = np.array([systems._point_coords(sys, p) for p in pts])
        w = np.exp(systems.birkhoff_sum_coords(sys, phi, coords, n))
    mu = empirical_from_points(sys, pts, w, meta={"kind": "periodic", "n": n})
    return mu.normalized()


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class MultiplicativityReport:
    constant: float              # best C with C^-1 Z_n Z_m <= Z_{n+m} <= C Z_n Z_m
    pairs: tuple                 # ((n, m, defect), ...)
    growing: bool

    def to_dict(self) -> dict:
        return {"constant": self.constant,
                "pairs": [list(p) for p in self.pairs],
                "growing": self.growing}


def multiplicativity_check(records: Sequence[PartitionSumRecord]) -> MultiplicativityReport:
    """Best constants in C^{-1} Z_n Z_m <= Z_{n+m} <= C Z_n Z_m."""
    keys = {(rec.system, rec.potential, rec.r, rec.variant, rec.domain)
            for rec in records}
    if len(keys) != 1:
        raise ValueError("records must share (sys, phi, r, variant, domain)")
    z = {rec.n: rec.value for rec in records}
    pairs = []
    for n in sorted(z):
        for m in sorted(z):
            if m >= n and n + m in z:
                gap = math.log(z[n + m]) - math.log(z[n]) - math.log(z[m])
                pairs.append((n, m, math.exp(abs(gap))))
    if not pairs:
        raise ValueError("no composable (n, m, n+m) triples among the records")
    best = max(d for *_, d in pairs)
    by_total = sorted((n + m, d) for n, m, d in pairs)
    half = len(by_total) // 2
    growing = False
    if half >= 1:
        growing = max(d for _, d in by_total[half:]) > \
            max(d for _, d in by_total[:half]) * 1.25
    return MultiplicativityReport(best, tuple(pairs), growing)


@dataclass(frozen=True)
class DistortionBounds:
    q_u: float
    q_s: float
    empirical: float
    pairs: int

    def to_dict(self) -> dict:
        return {"q_u": self.q_u, "q_s": self.q_s,
                "empirical": self.empirical, "pairs": self.pairs}


def bowen_distortion_constant(sys: SystemDescriptor, phi: Potential,
                              n: int = 10, pairs: int = 10_000,
                              seed: int = 0) -> DistortionBounds:
    """Closed form |phi|_beta tau^beta (1 - lambda^beta)^{-1}, plus data.

    The empirical part samples u-Bowen pairs — two points of one leaf whose
    first n iterates stay within the contracted cell — and takes the largest
    |S_n phi(x) - S_n phi(y)|, which must not exceed Q_u.
    """
    lam = sys.lam
    beta = phi.holder_beta
    q = 0.0 if phi.is_constant() else \
        phi.holder_norm * sys.tau ** beta / (1.0 - lam ** beta)
    rng = np.random.default_rng(seed)
    emp = 0.0
    if phi.is_constant():
        emp = 0.0
    elif sys.is_shift():
        if phi.kind == "locally_constant" and phi.offset >= 0:
            emp = 0.0  # phi(sigma^k .) reads coordinates the pair shares
        else:
            emp = _shift_pair_distortion(sys, phi, n, min(pairs, 500), rng)
    elif sys.family in ("cat_map", "solenoid"):
        x0 = (systems.TorusPoint(0.232, 0.577) if sys.family == "cat_map"
              else systems.solenoid_attractor_point(sys, 0.9))
        chart = systems.leaf_chart(sys, x0)
        h = chart.cell_radius(n, sys.tau)
        t0 = rng.uniform(-sys.tau, sys.tau - h, size=pairs)
        a = chart.arc_points(t0)
        b = chart.arc_points(t0 + rng.uniform(0, h, size=pairs))
        sa = systems.birkhoff_sum_coords(sys, phi, a, n)
        sb = systems.birkhoff_sum_coords(sys, phi, b, n)
        emp = float(np.abs(sa - sb).max())
    else:
        # horseshoe: pairs deep inside one u-strip of the base leaf
        depth = n + 8
        words = systems.admissible_words(systems.full_shift(2), depth)
        take = words[rng.integers(0, len(words), size=min(pairs, 4000))]
        ca, cb = [], []
        for w in take:
            tup = tuple(int(c) for c in w)
            ca.append(systems.horseshoe_point(sys, tup + (0,) * 20, (0,) * 20))
            cb.append(systems.horseshoe_point(sys, tup + (1,) * 20, (0,) * 20))
        A = np.array([[p.x, p.y] for p in ca])
        B = np.array([[p.x, p.y] for p in cb])
        sa = systems.birkhoff_sum_coords(sys, phi, A, n)
        sb = systems.birkhoff_sum_coords(sys, phi, B, n)
        emp = float(np.abs(sa - sb).max())
    return DistortionBounds(q, q, emp, pairs)


def _shift_pair_distortion(sys, phi, n, pairs, rng) -> float:
    words = systems.admissible_words(sys, n + 4)
    take = words[rng.integers(0, len(words), size=pairs)]
    worst = 0.0
    for w in take:
        tup = tuple(int(c) for c in w)
        exts = systems.lex_least_tail(sys, np.array([tup, tup]), 24)
        exts[1, -12:] = exts[1, -12:][::-1]  # perturb the far tail only
        xa = SymbolWord(sys.p, tuple(int(c) for c in exts[0]))
        xb = SymbolWord(sys.p, tuple(int(c) for c in exts[1]))
        da = systems.birkhoff_sum(sys, phi, xa, n)
        db = systems.birkhoff_sum(sys, phi, xb, n)
        worst = max(worst, abs(da - db))
    return worst
