"""Model hyperbolic systems: phase points, descriptors, potentials, leaf charts.

Four families share one interface: the Anosov cat map on T^2, the 1/4-1/2
solid-torus solenoid, the linear two-branch horseshoe, and full shifts /
subshifts of finite type with metric d(w, w') = 2^{-min{|i| : w_i != w'_i}}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

CAT_L = np.array([[2, 1], [1, 1]], dtype=np.int64)
CAT_L_INV = np.array([[1, -1], [-1, 2]], dtype=np.int64)
CAT_LAMBDA_U = (3.0 + math.sqrt(5.0)) / 2.0
CAT_LAMBDA_S = (3.0 - math.sqrt(5.0)) / 2.0

# unit eigenvectors of [[2,1],[1,1]]; the matrix is symmetric, so the
# unstable/stable frame is orthonormal
_eu = np.array([1.0, CAT_LAMBDA_U - 2.0])
CAT_EU = _eu / np.linalg.norm(_eu)
_es = np.array([1.0, CAT_LAMBDA_S - 2.0])
CAT_ES = _es / np.linalg.norm(_es)


class DynamicsError(ValueError):
    """Domain errors raised by the phase-space operations."""


class EscapedPointError(DynamicsError):
    pass


class InverseUndefinedError(DynamicsError):
    pass


class BracketError(DynamicsError):
    pass


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float


@dataclass(frozen=True)
class SolenoidPoint:
    """Point of the solid torus; `history` holds backward branch bits.

    Bit b_j selects the angle preimage theta_{-j} = theta_{-(j-1)}/2 + pi*b_j,
    so a point constructed on the depth-D attractor approximation knows the
    branch of the cross-section Cantor structure it sits on.
    """

    x: float
    y: float
    theta: float
    history: tuple[int, ...] = ()


@dataclass(frozen=True)
class HorseshoePoint:
    x: float
    y: float
    escaped: bool = False


@dataclass(frozen=True)
class SymbolWord:
    """Finite window of a two-sided sequence; coordinate i = symbols[i - offset].

    Coordinates outside the window are unspecified; comparisons treat them
    optimistically (two words are compared on the joint defined window).
    """

    p: int
    symbols: tuple[int, ...]
    offset: int = 0

    @property
    def lo(self) -> int:
        return self.offset

    @property
    def hi(self) -> int:
        return self.offset + len(self.symbols) - 1

    def coord(self, i: int):
        j = i - self.offset
        if 0 <= j < len(self.symbols):
            return self.symbols[j]
        return None

    def window(self, lo: int, hi: int) -> tuple:
        return tuple(self.coord(i) for i in range(lo, hi + 1))


Point = TorusPoint | SolenoidPoint | HorseshoePoint | SymbolWord


def torus_point(x: float, y: float) -> TorusPoint:
    return TorusPoint(float(x % 1.0), float(y % 1.0))


# ---------------------------------------------------------------------------
# system descriptors


@dataclass(frozen=True)
class SystemDescriptor:
    family: str                      # cat_map | solenoid | horseshoe | full_shift | sft
    p: int = 0                       # alphabet size (shifts)
    transition: Optional[tuple[tuple[int, ...], ...]] = None
    alpha: float = 0.0               # horseshoe vertical contraction
    beta: float = 0.0                # horseshoe horizontal expansion
    expansion: float = 0.0           # metric expansion rate along unstable leaves
    lam_s: float = 0.0               # stable contraction rate
    vol_expansion: float = 0.0       # |det Df|_{E^u}|, drives the geometric potential
    tau: float = 0.3                 # local-leaf size
    eps_bracket: float = 0.2
    dim_u: int = 1
    solenoid_depth: int = 14

    @property
    def lam(self) -> float:
        """Uniform contraction rate: max of stable rate and backward unstable rate."""
        return max(self.lam_s, 1.0 / self.expansion)

    def is_shift(self) -> bool:
        return self.family in ("full_shift", "sft")


def cat_map(tau: float = 0.3) -> SystemDescriptor:
    return SystemDescriptor(
        family="cat_map", expansion=CAT_LAMBDA_U, lam_s=CAT_LAMBDA_S,
        vol_expansion=CAT_LAMBDA_U, tau=tau, eps_bracket=0.2)


def solenoid(tau: float = 0.3, depth: int = 14) -> SystemDescriptor:
    # contraction 1/4 in the disc, angle doubling on the core circle
    return SystemDescriptor(
        family="solenoid", expansion=2.0, lam_s=0.25, vol_expansion=2.0,
        tau=tau, eps_bracket=0.3, solenoid_depth=depth)


def horseshoe(alpha: float, beta: float, tau: float = 0.3) -> SystemDescriptor:
    if not (0.0 < alpha < 0.5):
        raise ValueError(f"horseshoe needs 0 < alpha < 1/2, got {alpha}")
    if not beta > 2.0:
        raise ValueError(f"horseshoe needs beta > 2, got {beta}")
    return SystemDescriptor(
        family="horseshoe", alpha=alpha, beta=beta, expansion=beta,
        lam_s=alpha, vol_expansion=beta, tau=tau,
        eps_bracket=min(alpha, 1.0 / beta) / 2.0)


def full_shift(p: int = 2) -> SystemDescriptor:
    if p < 2:
        raise ValueError(f"full shift needs p >= 2, got {p}")
    return SystemDescriptor(
        family="full_shift", p=p, expansion=2.0, lam_s=0.5,
        vol_expansion=float(p), tau=1.0, eps_bracket=0.5)


def sft(matrix: Sequence[Sequence[int]]) -> SystemDescriptor:
    A = np.asarray(matrix, dtype=np.int64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("transition matrix must be square")
    if not np.isin(A, (0, 1)).all():
        raise ValueError("transition matrix entries must be 0/1")
    p = A.shape[0]
    if p < 2:
        raise ValueError("SFT needs at least 2 symbols")
    return SystemDescriptor(
        family="sft", p=p, transition=tuple(tuple(int(v) for v in row) for row in A),
        expansion=2.0, lam_s=0.5, vol_expansion=float(p), tau=1.0, eps_bracket=0.5)


def golden_mean_sft() -> SystemDescriptor:
    return sft([[1, 1], [1, 0]])


def transition_matrix(sys: SystemDescriptor) -> np.ndarray:
    if sys.family == "full_shift":
        return np.ones((sys.p, sys.p), dtype=np.int64)
    if sys.family == "sft":
        return np.asarray(sys.transition, dtype=np.int64)
    raise ValueError(f"{sys.family} has no transition matrix")


def descriptor_to_dict(sys: SystemDescriptor) -> dict:
    d = {"family": sys.family}
    if sys.is_shift():
        d["p"] = sys.p
        if sys.family == "sft":
            d["transition"] = [list(row) for row in sys.transition]
    if sys.family == "horseshoe":
        d["alpha"] = sys.alpha
        d["beta"] = sys.beta
    if sys.family == "solenoid":
        d["depth"] = sys.solenoid_depth
    if sys.tau != 0.3 and not sys.is_shift():
        d["tau"] = sys.tau
    return d


def descriptor_from_dict(d: dict) -> SystemDescriptor:
    fam = d["family"]
    if fam == "cat_map":
        return cat_map(tau=d.get("tau", 0.3))
    if fam == "solenoid":
        return solenoid(tau=d.get("tau", 0.3), depth=d.get("depth", 14))
    if fam == "horseshoe":
        return horseshoe(d["alpha"], d["beta"], tau=d.get("tau", 0.3))
    if fam == "full_shift":
        return full_shift(d.get("p", 2))
    if fam == "sft":
        return sft(d["transition"])
    raise ValueError(f"unknown system family {fam!r}")


def point_to_dict(x) -> dict:
    if isinstance(x, TorusPoint):
        return {"kind": "torus", "x": x.x, "y": x.y}
    if isinstance(x, SolenoidPoint):
        return {"kind": "solenoid", "x": x.x, "y": x.y, "theta": x.theta,
                "history": list(x.history)}
    if isinstance(x, HorseshoePoint):
        return {"kind": "horseshoe", "x": x.x, "y": x.y, "escaped": x.escaped}
    if isinstance(x, SymbolWord):
        return {"kind": "word", "p": x.p, "symbols": list(x.symbols),
                "offset": x.offset}
    raise ValueError(f"unknown point type {type(x).__name__}")


def point_from_dict(d: dict):
    kind = d["kind"]
    if kind == "torus":
        return TorusPoint(d["x"], d["y"])
    if kind == "solenoid":
        return SolenoidPoint(d["x"], d["y"], d["theta"], tuple(d["history"]))
    if kind == "horseshoe":
        return HorseshoePoint(d["x"], d["y"], d.get("escaped", False))
    if kind == "word":
        return SymbolWord(d["p"], tuple(d["symbols"]), d["offset"])
    raise ValueError(f"unknown point kind {kind!r}")


def potential_to_dict(phi: "Potential") -> dict:
    if phi.kind == "tabulated":
        raise ValueError("function potentials have no serial form")
    d = {"kind": phi.kind}
    if phi.kind == "geometric_t":
        d["t"] = phi.t
    if phi.kind == "locally_constant":
        d["depth"] = phi.depth
        d["table"] = [float(v) for v in phi.table]
        if phi.offset:
            d["offset"] = phi.offset
    return d


def potential_from_dict(sys: SystemDescriptor, d: dict) -> "Potential":
    kind = d["kind"]
    if kind == "zero":
        return zero_potential()
    if kind == "geometric_t":
        return geometric_t(d["t"])
    if kind == "locally_constant":
        return locally_constant(sys, d["depth"], d["table"],
                                offset=d.get("offset", 0))
    raise ValueError(f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# words


def word(sys: SystemDescriptor, symbols: Sequence[int], offset: int = 0) -> SymbolWord:
    """Validated SymbolWord for a shift system."""
    if not sys.is_shift():
        raise ValueError("words belong to shift systems")
    syms = tuple(int(s) for s in symbols)
    if any(not 0 <= s < sys.p for s in syms):
        raise ValueError(f"symbols out of range(0, {sys.p})")
    if sys.family == "sft":
        A = sys.transition
        for a, b in zip(syms, syms[1:]):
            if not A[a][b]:
                raise ValueError(f"inadmissible transition {a}->{b}")
    return SymbolWord(sys.p, syms, offset)


def _word_metric(a: SymbolWord, b: SymbolWord) -> float:
    lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
    best = None
    for i in range(lo, hi + 1):
        if a.symbols[i - a.offset] != b.symbols[i - b.offset]:
            m = abs(i)
            if best is None or m < best:
                best = m
    if best is None:
        return 0.0
    return 2.0 ** (-best)


# ---------------------------------------------------------------------------
# metric and dynamics


def _circle_dist(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def metric(sys: SystemDescriptor, a: Point, b: Point) -> float:
    if sys.family == "cat_map":
        dx = abs(a.x - b.x) % 1.0
        dy = abs(a.y - b.y) % 1.0
        return math.hypot(min(dx, 1.0 - dx), min(dy, 1.0 - dy))
    if sys.family == "solenoid":
        return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2
                         + _circle_dist(a.theta, b.theta) ** 2)
    if sys.family == "horseshoe":
        return math.hypot(a.x - b.x, a.y - b.y)
    return _word_metric(a, b)


def apply(sys: SystemDescriptor, x: Point, steps: int = 1) -> Point:
    """f^steps(x); steps may be negative where the inverse is defined."""
    if sys.is_shift():
        return replace(x, offset=x.offset - steps)
    step = 1 if steps >= 0 else -1
    for _ in range(abs(steps)):
        x = _step(sys, x, step)
    return x


def _step(sys: SystemDescriptor, x: Point, direction: int) -> Point:
    if sys.family == "cat_map":
        L = CAT_L if direction > 0 else CAT_L_INV
        return TorusPoint(float((L[0, 0] * x.x + L[0, 1] * x.y) % 1.0),
                          float((L[1, 0] * x.x + L[1, 1] * x.y) % 1.0))
    if sys.family == "solenoid":
        return _solenoid_step(sys, x, direction)
    if sys.family == "horseshoe":
        return _horseshoe_step(sys, x, direction)
    raise AssertionError(sys.family)


def _solenoid_step(sys: SystemDescriptor, x: SolenoidPoint, direction: int) -> SolenoidPoint:
    if direction > 0:
        bit = 1 if (x.theta % TWO_PI) >= math.pi else 0
        hist = ((bit,) + x.history)[: sys.solenoid_depth]
        return SolenoidPoint(x.x / 4.0 + math.cos(x.theta) / 2.0,
                             x.y / 4.0 + math.sin(x.theta) / 2.0,
                             (2.0 * x.theta) % TWO_PI, hist)
    candidates = [x.history[0]] if x.history else [0, 1]
    for bit in candidates:
        th = (x.theta / 2.0 + math.pi * bit) % TWO_PI
        px = 4.0 * (x.x - math.cos(th) / 2.0)
        py = 4.0 * (x.y - math.sin(th) / 2.0)
        if px * px + py * py <= 1.0 + 1e-9:
            return SolenoidPoint(px, py, th, x.history[1:])
    raise InverseUndefinedError("solenoid point is outside f(U); no disc preimage")


def _horseshoe_step(sys: SystemDescriptor, x: HorseshoePoint, direction: int) -> HorseshoePoint:
    if x.escaped:
        raise EscapedPointError("cannot iterate an escaped horseshoe point")
    a, b = sys.alpha, sys.beta
    if direction > 0:
        if x.x <= 1.0 / b:
            return HorseshoePoint(b * x.x, a * x.y)
        if x.x >= 1.0 - 1.0 / b:
            return HorseshoePoint(b * x.x - b + 1.0, a * x.y + 1.0 - a)
        return HorseshoePoint(x.x, x.y, escaped=True)
    if x.y <= a:
        return HorseshoePoint(x.x / b, x.y / a)
    if x.y >= 1.0 - a:
        return HorseshoePoint((x.x + b - 1.0) / b, (x.y - 1.0 + a) / a)
    return HorseshoePoint(x.x, x.y, escaped=True)


def orbit(sys: SystemDescriptor, x: Point, n: int) -> list[Point]:
    """[x, f(x), ..., f^{n-1}(x)]."""
    out = [x]
    for _ in range(n - 1):
        out.append(apply(sys, out[-1], 1))
    return out


def dyn_metric(sys: SystemDescriptor, a: Point, b: Point, n: int) -> float:
    """d_n(a, b) = max{d(f^k a, f^k b) : 0 <= k < n}."""
    if n < 1:
        raise ValueError("dyn_metric needs n >= 1")
    best = 0.0
    for _ in range(n):
        best = max(best, metric(sys, a, b))
        if _ < n - 1:
            a, b = apply(sys, a, 1), apply(sys, b, 1)
    return best


def bowen_ball_contains(sys: SystemDescriptor, center: Point, q: Point,
                        n: int, r: float) -> bool:
    return dyn_metric(sys, center, q, n) < r


def same_unstable_leaf(sys: SystemDescriptor, x: Point, q: Point,
                       tol: float = 1e-9) -> bool:
    """Whether q lies on the local unstable leaf through x."""
    if sys.is_shift():
        lo = max(x.lo, q.lo)
        return all(x.coord(i) == q.coord(i) for i in range(lo, 0))
    if sys.family == "cat_map":
        d = _torus_wrap(np.array([q.x - x.x, q.y - x.y]))
        # parallel to e_u: zero component along e_s
        return abs(float(d @ CAT_ES)) <= tol and abs(float(d @ CAT_EU)) <= sys.tau + tol
    if sys.family == "horseshoe":
        return abs(x.y - q.y) <= tol
    if sys.family == "solenoid":
        if x.history != q.history:
            return False
        ref = solenoid_leaf_point(sys, x.history, q.theta)
        return math.hypot(ref.x - q.x, ref.y - q.y) <= max(tol, 4.0 ** (-len(x.history)))
    raise AssertionError(sys.family)


def u_bowen_ball_contains(sys: SystemDescriptor, center: Point, q: Point,
                          n: int, r: float) -> bool:
    """Membership in B_n^u(center, r): on-leaf points with d_n < r.

    On shifts with r in (1/2, 1) this is exactly the depth-n one-sided
    cylinder inside the leaf; on a cat-map leaf it is the arc of half-width
    r * lambda_u^{-(n-1)}.
    """
    return same_unstable_leaf(sys, center, q) and dyn_metric(sys, center, q, n) < r


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class Potential:
    kind: str                      # zero | geometric_t | locally_constant | tabulated
    t: float = 0.0
    depth: int = 0
    offset: int = 0
    table: Optional[tuple[float, ...]] = None
    func: Optional[Callable] = None
    holder_beta: float = 1.0
    holder_norm: float = 0.0

    def is_constant(self) -> bool:
        return self.kind in ("zero", "geometric_t")


def zero_potential() -> Potential:
    return Potential(kind="zero")


def geometric_t(t: float) -> Potential:
    """phi_t = -t log|det Df|_{E^u}|; constant on each built-in family."""
    return Potential(kind="geometric_t", t=float(t))


def locally_constant(sys: SystemDescriptor, depth: int, table: Sequence[float],
                     offset: int = 0) -> Potential:
    """Potential depending on coordinates offset..offset+depth-1 of a word.

    `table` is flat, indexed by sum(w_i * p^(depth-1-i)).
    """
    if not sys.is_shift():
        raise ValueError("locally constant potentials live on shifts")
    tab = tuple(float(v) for v in table)
    if len(tab) != sys.p ** depth:
        raise ValueError(f"table needs p^depth = {sys.p ** depth} entries")
    osc = max(tab) - min(tab)
    reach = max(abs(offset), abs(offset + depth - 1))
    return Potential(kind="locally_constant", depth=depth, offset=offset,
                     table=tab, holder_beta=1.0, holder_norm=osc * 2.0 ** reach)


def bernoulli_potential(sys: SystemDescriptor, probs: Sequence[float]) -> Potential:
    """phi(w) = log p_{w_0}; its equilibrium state is the Bernoulli measure."""
    if len(probs) != sys.p or abs(sum(probs) - 1.0) > 1e-12:
        raise ValueError("probs must be a length-p probability vector")
    return locally_constant(sys, 1, [math.log(q) for q in probs])


def tabulated(func: Callable, holder_beta: float = 1.0,
              holder_norm: float = 0.0) -> Potential:
    """Generic evaluator with declared Hoelder data.

    For geometric systems `func` maps an (N, d) coordinate array to (N,);
    for shifts it maps a SymbolWord to a float.
    """
    return Potential(kind="tabulated", func=func, holder_beta=holder_beta,
                     holder_norm=holder_norm)


def geometric_constant(sys: SystemDescriptor, phi: Potential) -> float:
    """The constant value of a geometric_t potential on `sys`."""
    if phi.kind == "zero":
        return 0.0
    if phi.kind != "geometric_t":
        raise ValueError("not a constant potential")
    return -phi.t * math.log(sys.vol_expansion)


def evaluate_potential(sys: SystemDescriptor, phi: Potential, x: Point) -> float:
    if phi.kind == "zero":
        return 0.0
    if phi.kind == "geometric_t":
        return -phi.t * math.log(sys.vol_expansion)
    if phi.kind == "locally_constant":
        idx = 0
        for i in range(phi.offset, phi.offset + phi.depth):
            c = x.coord(i)
            if c is None:
                raise ValueError("word window does not determine the potential")
            idx = idx * sys.p + c
        return phi.table[idx]
    if sys.is_shift():
        return float(phi.func(x))
    coords = _point_coords(sys, x)[None, :]
    return float(np.asarray(phi.func(coords)).reshape(-1)[0])


def birkhoff_sum(sys: SystemDescriptor, phi: Potential, x: Point, n: int) -> float:
    """S_n phi(x) = sum_{k<n} phi(f^k x)."""
    if phi.is_constant():
        return n * evaluate_potential(sys, phi, x)
    total = 0.0
    for _ in range(n):
        total += evaluate_potential(sys, phi, x)
        x = apply(sys, x, 1)
    return total


# ---------------------------------------------------------------------------
# Smale bracket


def smale_bracket(sys: SystemDescriptor, x: Point, y: Point) -> Point:
    """[x, y] = V^s_loc(x) cap V^u_loc(y)."""
    if sys.is_shift():
        if x.lo > 0 or y.hi < -1 or y.lo > -1:
            raise BracketError("windows too small to splice past/future")
        past = tuple(y.symbols[: -y.offset]) if y.offset < 0 else ()
        future = tuple(x.symbols[-x.offset:]) if x.offset < 0 else tuple(x.symbols)
        if sys.family == "sft" and past and future:
            if not sys.transition[past[-1]][future[0]]:
                raise BracketError(
                    f"splice {past[-1]}->{future[0]} inadmissible for the SFT")
        return SymbolWord(sys.p, past + future, -len(past))
    if metric(sys, x, y) > sys.eps_bracket:
        raise BracketError("points are farther apart than eps_bracket")
    if sys.family == "cat_map":
        delta = _torus_wrap(np.array([y.x - x.x, y.y - x.y]))
        # z = x + s*e_s = y + u*e_u  =>  (delta . e_s) = s, using orthonormal frame
        s = float(delta @ CAT_ES)
        return torus_point(x.x + s * CAT_ES[0], x.y + s * CAT_ES[1])
    if sys.family == "horseshoe":
        if x.escaped or y.escaped:
            raise BracketError("bracket undefined for escaped points")
        return HorseshoePoint(x.x, y.y)
    if sys.family == "solenoid":
        if not y.history:
            raise BracketError("solenoid bracket needs the leaf branch history of y")
        return solenoid_leaf_point(sys, y.history, x.theta)
    raise AssertionError(sys.family)


# ---------------------------------------------------------------------------
# leaf charts


@dataclass(frozen=True)
class LeafChart:
    """Local unstable leaf through `base`, of size tau.

    kind "arc": parametrized by signed leaf-arc length t in [-tau, tau]
    (cat map: base + t*e_u on the torus; solenoid: theta-arc with the disc
    coordinates reconstructed along the branch history).
    kind "tree": the tree of admissible forward cylinders rooted at the
    base word's past (shifts; horseshoe via its binary coding).
    """

    sys: SystemDescriptor
    base: Point
    tau: float
    kind: str

    def point_at(self, t) -> Point:
        if self.kind == "arc":
            if abs(t) > self.tau + 1e-12:
                raise ValueError("arc parameter outside the chart")
            if self.sys.family == "cat_map":
                return torus_point(self.base.x + t * CAT_EU[0],
                                   self.base.y + t * CAT_EU[1])
            return solenoid_leaf_point(self.sys, self.base.history,
                                       self.base.theta + t)
        w = tuple(int(s) for s in t)
        if self.sys.family == "horseshoe":
            return HorseshoePoint(horseshoe_u_coord(self.sys, w), self.base.y)
        past = self.past_symbols()
        return word(self.sys, past + w, offset=-len(past))

    def arc_points(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized point coordinates for kind 'arc'."""
        if self.sys.family == "cat_map":
            base = np.array([self.base.x, self.base.y])
            return (base[None, :] + np.asarray(ts)[:, None] * CAT_EU[None, :]) % 1.0
        return solenoid_leaf_coords(self.sys, self.base.history,
                                    self.base.theta + np.asarray(ts))

    def past_symbols(self) -> tuple[int, ...]:
        if self.sys.is_shift():
            w = self.base
            return tuple(w.symbols[: max(0, -w.offset)]) if w.offset < 0 else ()
        raise ValueError("past_symbols is a shift-chart notion")

    def cell_radius(self, n: int, r: float) -> float:
        """Half-width of an order-n u-Bowen cell on an arc chart."""
        if self.kind != "arc":
            raise ValueError("cell_radius applies to arc charts")
        return r * self.sys.expansion ** (-(n - 1))


def leaf_chart(sys: SystemDescriptor, x: Point, tau: Optional[float] = None) -> LeafChart:
    tau = sys.tau if tau is None else float(tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    if sys.family in ("cat_map", "solenoid"):
        if sys.family == "solenoid" and len(x.history) < sys.solenoid_depth:
            raise ValueError("solenoid chart base needs a full-depth branch history")
        return LeafChart(sys, x, tau, "arc")
    if sys.family == "horseshoe" and x.escaped:
        raise ValueError("no leaf chart at an escaped point")
    return LeafChart(sys, x, tau, "tree")


# ---------------------------------------------------------------------------
# solenoid attractor geometry


def solenoid_backward_angles(history: tuple[int, ...], theta) -> list:
    """Angles theta_{-1}..theta_{-D} along the branch bits."""
    out = []
    th = theta
    for b in history:
        th = th / 2.0 + math.pi * b
        out.append(th)
    return out


def solenoid_leaf_coords(sys: SystemDescriptor, history: tuple[int, ...],
                         thetas: np.ndarray) -> np.ndarray:
    """(N, 3) coordinates of leaf points at the given angles.

    Depth-D reconstruction: x + iy = sum_j 4^{-(j-1)} c(theta_{-j}) with
    c(t) = (cos t, sin t)/2; exact on the approximation up to 4^{-D}.
    """
    th = np.asarray(thetas, dtype=float)
    xs = np.zeros_like(th)
    ys = np.zeros_like(th)
    cur = th.copy()
    scale = 1.0
    for b in history:
        cur = cur / 2.0 + math.pi * b
        xs += scale * np.cos(cur) / 2.0
        ys += scale * np.sin(cur) / 2.0
        scale /= 4.0
    return np.stack([xs, ys, th % TWO_PI], axis=1)


def solenoid_leaf_point(sys: SystemDescriptor, history: tuple[int, ...],
                        theta: float) -> SolenoidPoint:
    c = solenoid_leaf_coords(sys, history, np.array([theta]))[0]
    return SolenoidPoint(float(c[0]), float(c[1]), float(c[2]), tuple(history))


def solenoid_attractor_point(sys: SystemDescriptor, theta: float,
                             history: tuple[int, ...] | None = None) -> SolenoidPoint:
    """Point of the depth-D attractor approximation over angle theta."""
    if history is None:
        history = (0,) * sys.solenoid_depth
    if len(history) != sys.solenoid_depth:
        raise ValueError("history length must equal the configured depth")
    return solenoid_leaf_point(sys, tuple(int(b) for b in history), theta)


# ---------------------------------------------------------------------------
# horseshoe coding


def horseshoe_u_coord(sys: SystemDescriptor, future: Sequence[int]) -> float:
    """x-coordinate of the itinerary with the all-zeros tail (leftmost point)."""
    c1 = 1.0 - 1.0 / sys.beta
    x = 0.0
    for k, w in enumerate(future):
        if w:
            x += c1 * sys.beta ** (-k)
    return x


def horseshoe_s_coord(sys: SystemDescriptor, past: Sequence[int]) -> float:
    """y-coordinate from the backward itinerary (past[0] = omega_{-1})."""
    y = 0.0
    for j, w in enumerate(past):
        if w:
            y += (1.0 - sys.alpha) * sys.alpha ** j
    return y


def horseshoe_point(sys: SystemDescriptor, future: Sequence[int],
                    past: Sequence[int] = ()) -> HorseshoePoint:
    return HorseshoePoint(horseshoe_u_coord(sys, future),
                          horseshoe_s_coord(sys, past))


def horseshoe_strip(sys: SystemDescriptor, future: Sequence[int]) -> tuple[float, float]:
    """x-interval [lo, lo + beta^{-n}] of the depth-n vertical strip."""
    lo = horseshoe_u_coord(sys, future)
    return lo, lo + sys.beta ** (-len(future))


# ---------------------------------------------------------------------------
# vectorized coordinate paths


def _point_coords(sys: SystemDescriptor, x: Point) -> np.ndarray:
    if sys.family == "cat_map":
        return np.array([x.x, x.y])
    if sys.family == "solenoid":
        return np.array([x.x, x.y, x.theta])
    if sys.family == "horseshoe":
        return np.array([x.x, x.y])
    raise ValueError("no coordinate embedding for shift points")


def _torus_wrap(delta: np.ndarray) -> np.ndarray:
    """Wrap coordinate differences into [-1/2, 1/2)."""
    return (np.asarray(delta) + 0.5) % 1.0 - 0.5


def torus_apply_coords(coords: np.ndarray, steps: int = 1) -> np.ndarray:
    """Cat-map image of an (N, 2) array, mod 1."""
    L = CAT_L if steps >= 0 else CAT_L_INV
    out = np.asarray(coords)
    for _ in range(abs(steps)):
        out = (out @ L.T) % 1.0
    return out


def torus_metric_coords(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = _torus_wrap(np.asarray(a) - np.asarray(b))
    return np.hypot(d[..., 0], d[..., 1])


def torus_dyn_metric_coords(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Vectorized d_n on the torus for (N, 2) arrays."""
    a = np.asarray(a).copy()
    b = np.asarray(b).copy()
    best = torus_metric_coords(a, b)
    for _ in range(n - 1):
        a = torus_apply_coords(a)
        b = torus_apply_coords(b)
        best = np.maximum(best, torus_metric_coords(a, b))
    return best

# ---------------------------------------------------------------------------
# vectorized symbol machinery
#
# Rows of a word array are admissible words in lexicographic order; most of
# the partition-sum and cell-enumeration code works on these arrays directly.


def admissible_words(sys: SystemDescriptor, n: int) -> np.ndarray:
    """All admissible words of length n as an (count, n) int array, lex order."""
    if not sys.is_shift():
        raise ValueError("word enumeration needs a shift")
    if n < 1:
        raise ValueError("n >= 1")
    words = np.arange(sys.p, dtype=np.int64)[:, None]
    if sys.family == "full_shift":
        for _ in range(n - 1):
            m = len(words)
            ext = np.repeat(words, sys.p, axis=0)
            tail = np.tile(np.arange(sys.p, dtype=np.int64), m)[:, None]
            words = np.hstack([ext, tail])
        return words
    A = np.asarray(sys.transition)
    for _ in range(n - 1):
        m = len(words)
        ext = np.repeat(words, sys.p, axis=0)
        tail = np.tile(np.arange(sys.p, dtype=np.int64), m)[:, None]
        keep = A[ext[:, -1], tail[:, 0]] == 1
        words = np.hstack([ext[keep], tail[keep]])
    return words


def lex_least_tail(sys: SystemDescriptor, words: np.ndarray, extra: int) -> np.ndarray:
    """Extend each row by `extra` symbols along the lex-least admissible path."""
    if extra <= 0:
        return words
    words = np.asarray(words)
    if sys.family == "full_shift":
        pad = np.zeros((len(words), extra), dtype=words.dtype)
        return np.hstack([words, pad])
    A = np.asarray(sys.transition)
    succ = np.array([int(np.argmax(A[a] == 1)) for a in range(sys.p)])
    if not all(A[a, succ[a]] == 1 for a in range(sys.p)):
        bad = next(a for a in range(sys.p) if A[a].sum() == 0)
        raise DynamicsError(f"symbol {bad} has no admissible successor")
    cols = [words]
    last = words[:, -1]
    for _ in range(extra):
        last = succ[last]
        cols.append(last[:, None])
    return np.hstack(cols)


def word_window_codes(words: np.ndarray, p: int, depth: int) -> np.ndarray:
    """Sliding base-p codes of every length-`depth` window, shape (M, L-depth+1)."""
    words = np.asarray(words)
    win = np.lib.stride_tricks.sliding_window_view(words, depth, axis=1)
    powers = p ** np.arange(depth - 1, -1, -1)
    return win @ powers


def birkhoff_sum_words(sys: SystemDescriptor, phi: Potential, words: np.ndarray,
                       n: int) -> np.ndarray:
    """Vectorized S_n phi over word-array rows (sequences starting at index 0).

    Rows must be long enough to determine phi along the first n shifts, i.e.
    carry at least n - 1 + depth symbols for a depth-d locally constant phi.
    """
    words = np.asarray(words)
    m = len(words)
    if phi.is_constant():
        return np.full(m, n * evaluate_potential_word_constant(sys, phi))
    if phi.kind == "locally_constant":
        if phi.offset != 0:
            raise ValueError("vector path needs offset-0 potentials")
        if words.shape[1] < n - 1 + phi.depth:
            raise ValueError("rows too short to determine S_n phi")
        codes = word_window_codes(words, sys.p, phi.depth)
        table = np.asarray(phi.table)
        return table[codes[:, :n]].sum(axis=1)
    out = np.empty(m)
    for i in range(m):
        out[i] = birkhoff_sum(sys, phi, SymbolWord(sys.p, tuple(int(c) for c in words[i])), n)
    return out


def evaluate_potential_word_constant(sys: SystemDescriptor, phi: Potential) -> float:
    if phi.kind == "zero":
        return 0.0
    return -phi.t * math.log(sys.vol_expansion)


def birkhoff_sum_coords(sys: SystemDescriptor, phi: Potential, coords: np.ndarray,
                        n: int) -> np.ndarray:
    """Vectorized S_n phi along orbits of an (M, d) coordinate array."""
    coords = np.asarray(coords, dtype=float)
    m = len(coords)
    if phi.is_constant():
        return np.full(m, n * (-phi.t * math.log(sys.vol_expansion)))
    total = np.zeros(m)
    cur = coords
    for _ in range(n):
        total += np.asarray(phi.func(cur), dtype=float)
        cur = apply_coords(sys, cur)
    return total


def apply_coords(sys: SystemDescriptor, coords: np.ndarray, steps: int = 1) -> np.ndarray:
    """Vectorized forward map on an (M, d) coordinate array."""
    if sys.family == "cat_map":
        return torus_apply_coords(coords, steps)
    if steps != 1:
        out = coords
        for _ in range(steps):
            out = apply_coords(sys, out)
        return out
    if sys.family == "solenoid":
        x, y, th = coords[:, 0], coords[:, 1], coords[:, 2]
        return np.column_stack([x / 4 + np.cos(th) / 2, y / 4 + np.sin(th) / 2,
                                (2 * th) % TWO_PI])
    if sys.family == "horseshoe":
        x, y = coords[:, 0], coords[:, 1]
        lo = x <= 1.0 / sys.beta
        hi = x >= 1 - 1.0 / sys.beta
        out = np.empty_like(coords)
        out[:, 0] = np.where(lo, sys.beta * x, sys.beta * x - sys.beta + 1)
        out[:, 1] = np.where(lo, sys.alpha * y, sys.alpha * y + 1 - sys.alpha)
        escaped = ~lo & ~hi
        out[escaped] = coords[escaped]  # frozen, mirrors HorseshoePoint.escaped
        return out
    raise ValueError("no coordinate action for shifts")


def orbit_coords(sys: SystemDescriptor, coords: np.ndarray, n: int) -> np.ndarray:
    """Stack of the first n images, shape (M, n, d)."""
    coords = np.asarray(coords, dtype=float)
    out = np.empty((len(coords), n, coords.shape[1]))
    cur = coords
    for k in range(n):
        out[:, k, :] = cur
        if k + 1 < n:
            cur = apply_coords(sys, cur)
    return out


def metric_coords(sys: SystemDescriptor, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorized ambient metric on coordinate arrays (broadcasting)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if sys.family == "cat_map":
        return torus_metric_coords(a, b)
    if sys.family == "solenoid":
        dxy = np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])
        dth = np.abs(a[..., 2] - b[..., 2]) % TWO_PI
        dth = np.minimum(dth, TWO_PI - dth)
        return np.hypot(dxy, dth)
    return np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])


def dyn_metric_blocks(sys: SystemDescriptor, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d_n from orbit blocks (..., n, d): max of the metric over the time axis."""
    return metric_coords(sys, np.asarray(a), np.asarray(b)).max(axis=-1)
