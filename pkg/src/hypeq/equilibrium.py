"""Evolution of leaf measures toward equilibrium, and the verification suite.

The geometric construction: push a reference measure along unstable leaves,
average the first n images, and diagnose weak* convergence against a fixed
test dictionary.  Gibbs/variational/conditional checks compare the limit
against exact oracles where those exist (transfer-operator measures on
shifts, Lebesgue for the cat map).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from hypeq import systems
from hypeq.systems import (
    CAT_LAMBDA_U, DynamicsError, Potential, SymbolWord, SystemDescriptor,
)

__all__ = [
    "EmpiricalMeasure", "TestDictionary", "default_dictionary",
    "weakstar_discrepancy", "LebesgueTorus", "SftGibbsMeasure",
    "empirical_from_points", "empirical_pushforward", "resample",
    "DEFAULT_ATOM_BUDGET", "evolve_average",
    "ConvergenceReport", "convergence_report",
    "GibbsReport", "gibbs_check", "VariationalReport", "variational_check",
    "TorusRectangle", "ConditionalEstimate", "conditional_estimate",
    "ConditionalComparison", "conditional_vs_reference_check",
    "ProductReport", "product_structure_check",
    "PushforwardReport", "pushforward_conditional_check",
]


# ---------------------------------------------------------------------------
# empirical measures


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted atoms on ambient phase space.

    Geometric families store atom coordinates in `coords` ((M, d) float);
    shifts store symbol windows in `words` ((M, L) int, coordinates
    offset..offset+L-1).  `meta` records provenance: source leaf, averaging
    length, normalization constant, resampling seed.
    """
    sys: SystemDescriptor
    weights: np.ndarray
    coords: Optional[np.ndarray] = None
    words: Optional[np.ndarray] = None
    offset: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if (w < -1e-15).any():
            raise ValueError("negative atom weight")
        if self.coords is None and self.words is None:
            raise ValueError("measure needs atoms")

    @property
    def size(self) -> int:
        return len(self.weights)

    def total(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "EmpiricalMeasure":
        t = self.total()
        if t <= 0:
            raise ValueError("cannot normalize a null measure")
        meta = dict(self.meta)
        meta["normalization"] = meta.get("normalization", 1.0) * t
        return EmpiricalMeasure(self.sys, self.weights / t, self.coords,
                                self.words, self.offset, meta)

    def atoms(self):
        """Yield (point, weight) pairs; for bulk work use the arrays."""
        if self.coords is not None:
            for row, w in zip(self.coords, self.weights):
                yield _point_from_coords(self.sys, row), float(w)
        else:
            for row, w in zip(self.words, self.weights):
                yield SymbolWord(self.sys.p, tuple(int(c) for c in row),
                                 self.offset), float(w)

    def to_dict(self) -> dict:
        d = {
            "system": systems.descriptor_to_dict(self.sys),
            "weights": self.weights.tolist(),
            "offset": self.offset,
            "meta": self.meta,
        }
        if self.coords is not None:
            d["coords"] = self.coords.tolist()
        if self.words is not None:
            d["words"] = self.words.tolist()
        return d

    @staticmethod
    def from_dict(d: dict) -> "EmpiricalMeasure":
        return EmpiricalMeasure(
            systems.descriptor_from_dict(d["system"]),
            np.asarray(d["weights"], dtype=float),
            None if "coords" not in d else np.asarray(d["coords"], dtype=float),
            None if "words" not in d else np.asarray(d["words"], dtype=np.int64),
            int(d.get("offset", 0)),
            dict(d.get("meta", {})),
        )


def _point_from_coords(sys: SystemDescriptor, row: np.ndarray):
    if sys.family == "cat_map":
        return systems.TorusPoint(float(row[0]), float(row[1]))
    if sys.family == "solenoid":
        return systems.SolenoidPoint(float(row[0]), float(row[1]), float(row[2]))
    return systems.HorseshoePoint(float(row[0]), float(row[1]))


def empirical_from_points(sys: SystemDescriptor, points: Sequence,
                          weights: Sequence[float], meta: Optional[dict] = None
                          ) -> EmpiricalMeasure:
    w = np.asarray(list(weights), dtype=float)
    if sys.is_shift():
        length = min(len(p.symbols) for p in points)
        off = max(p.offset for p in points)
        rows = np.array([[p.coord(off + i) for i in range(length - (off - p.offset))]
                         for p in points], dtype=object)
        # uniform window: trim to the shortest usable row
        width = min(len(r) for r in rows)
        arr = np.array([r[:width] for r in rows], dtype=np.int64)
        return EmpiricalMeasure(sys, w, words=arr, offset=off, meta=meta or {})
    arr = np.array([systems._point_coords(sys, p) for p in points], dtype=float)
    return EmpiricalMeasure(sys, w, coords=arr, meta=meta or {})


# ---------------------------------------------------------------------------
# test dictionaries


@dataclass(frozen=True)
class TestDictionary:
    """Finite family of sup-norm ≤ 1 test functions, fixed per run.

    kind "fourier": labels (k, l) modes e^{2πi(kx+ly)} on the torus.
    kind "cylinder": labels are symbol tuples, indicator of [w] at offset 0.
    kind "solenoid": labels (m, b) = e^{imθ} times branch indicator
                     (b = -1 means no indicator).
    kind "strip": labels ("u"|"s", word) horseshoe strip indicators.
    """
    kind: str
    labels: tuple

    @property
    def size(self) -> int:
        return len(self.labels)

    def describe(self) -> dict:
        return {"kind": self.kind, "labels": [list(np.atleast_1d(l).tolist())
                                              if not isinstance(l, tuple) else list(l)
                                              for l in self.labels]}


def default_dictionary(sys: SystemDescriptor, kmax: int = 8,
                       depth: int = 6) -> TestDictionary:
    """Per-family defaults separating the built-in measures."""
    if sys.family == "cat_map":
        labels = [(k, l) for k in range(-kmax, kmax + 1)
                  for l in range(-kmax, kmax + 1)
                  if (k, l) > (0, 0) or (k > 0)]
        labels = [(k, l) for (k, l) in labels if (k, l) != (0, 0)]
        # keep one representative per conjugate pair (k,l) ~ (-k,-l)
        labels = [(k, l) for (k, l) in labels if (k > 0) or (k == 0 and l > 0)]
        return TestDictionary("fourier", tuple(labels))
    if sys.family == "solenoid":
        labels = [(m, b) for m in range(0, kmax + 1) for b in (-1, 0, 1)
                  if not (m == 0 and b == -1)]
        return TestDictionary("solenoid", tuple(labels))
    if sys.family == "horseshoe":
        labels = []
        for d in range(1, depth + 1):
            for w in systems.admissible_words(systems.full_shift(2), d):
                labels.append(("u", tuple(int(c) for c in w)))
                labels.append(("s", tuple(int(c) for c in w)))
        return TestDictionary("strip", tuple(labels))
    labels = []
    for d in range(1, depth + 1):
        for w in systems.admissible_words(sys, d):
            labels.append(tuple(int(c) for c in w))
    return TestDictionary("cylinder", tuple(labels))


def dictionary_moments(measure, dic: TestDictionary) -> np.ndarray:
    """Vector of ∫ψ dμ over the dictionary (complex for Fourier kinds)."""
    if hasattr(measure, "exact_moments"):
        return measure.exact_moments(dic)
    return _empirical_moments(measure, dic)


def _empirical_moments(mu: EmpiricalMeasure, dic: TestDictionary) -> np.ndarray:
    w = mu.weights
    t = w.sum()
    if abs(t - 1.0) > 1e-9:
        w = w / t
    if dic.kind == "fourier":
        modes = np.asarray(dic.labels, dtype=float)          # (K, 2)
        phases = mu.coords @ modes.T                         # (M, K)
        return (w[:, None] * np.exp(2j * np.pi * phases)).sum(axis=0)
    if dic.kind == "solenoid":
        th = mu.coords[:, 2]
        branch = (th >= np.pi).astype(int)  # first symbol of the forward itinerary
        out = np.empty(dic.size, dtype=complex)
        for i, (m, b) in enumerate(dic.labels):
            ind = 1.0 if b < 0 else (branch == b).astype(float)
            out[i] = (w * ind * np.exp(1j * m * th)).sum()
        return out
    if dic.kind == "strip":
        out = np.empty(dic.size, dtype=complex)
        x, y = mu.coords[:, 0], mu.coords[:, 1]
        for i, (side, word) in enumerate(dic.labels):
            lo, hi = systems.horseshoe_strip(mu.sys, word)
            c = x if side == "u" else y
            out[i] = (w * ((c >= lo) & (c <= hi))).sum()
        return out
    if dic.kind == "cylinder":
        words = mu.words
        if mu.offset > 0:
            raise DynamicsError("atom windows do not cover coordinate 0")
        start = -mu.offset
        out = np.empty(dic.size, dtype=complex)
        width = words.shape[1] - start
        for i, lab in enumerate(dic.labels):
            d = len(lab)
            if d > width:
                raise DynamicsError("atom windows shorter than dictionary depth")
            hit = np.ones(len(words), dtype=bool)
            for j, s in enumerate(lab):
                hit &= words[:, start + j] == s
            out[i] = (w * hit).sum()
        return out
    raise ValueError(f"unknown dictionary kind {dic.kind}")


def weakstar_discrepancy(mu, nu, dic: TestDictionary) -> float:
    """max over the dictionary of |∫ψ dμ − ∫ψ dν|."""
    a = dictionary_moments(mu, dic)
    b = dictionary_moments(nu, dic)
    return float(np.abs(a - b).max())


# ---------------------------------------------------------------------------
# analytic oracles


class LebesgueTorus:
    """Area measure on T^2 — the SRB measure of the cat map.

    Ball masses are exact: d_n-balls are intersections of two ellipses
    (only the first and last time constraints bind, by convexity of
    a^2 λ^{2k} + b^2 λ^{-2k} in k), so the area reduces to circular-segment
    closed forms.
    """

    def __init__(self, sys: SystemDescriptor):
        if sys.family != "cat_map":
            raise ValueError("Lebesgue oracle is for the cat map")
        self.sys = sys

    def exact_moments(self, dic: TestDictionary) -> np.ndarray:
        if dic.kind != "fourier":
            raise ValueError("torus oracle needs a Fourier dictionary")
        out = np.zeros(dic.size, dtype=complex)
        for i, (k, l) in enumerate(dic.labels):
            if k == 0 and l == 0:
                out[i] = 1.0
        return out

    def ball_mass(self, x, n: int, r: float) -> float:
        """Leb(B_n(x, r)); independent of x."""
        lam = CAT_LAMBDA_U
        m = n - 1
        if m == 0:
            return math.pi * r * r
        # quarter-lens: circle a^2+b^2=r^2 binds for a < a*, the ellipse
        # a^2 lam^{2m} + b^2 lam^{-2m} = r^2 binds beyond
        astar = r / math.sqrt(lam ** (2 * m) + 1.0)
        quarter = _circle_area_slice(r, 0.0, astar)
        quarter += _circle_area_slice(r, astar * lam ** m, r)  # u = a λ^m
        return 4.0 * quarter

    def leaf_ball_mass(self, n: int, r: float, tau: float) -> float:
        """Length of B_n^u(x, r) inside a leaf chart of half-length tau."""
        return 2.0 * min(tau, r * CAT_LAMBDA_U ** (-(n - 1)))

    def sample(self, k: int, rng) -> np.ndarray:
        return rng.random((k, 2))


def _circle_area_slice(r: float, a0: float, a1: float) -> float:
    """∫_{a0}^{a1} sqrt(r^2 - a^2) da."""
    def F(a):
        a = min(max(a, -r), r)
        return 0.5 * (a * math.sqrt(max(r * r - a * a, 0.0)) + r * r * math.asin(a / r))
    return F(a1) - F(a0)


class SftGibbsMeasure:
    """Exact Gibbs/equilibrium measure of a locally constant potential.

    Cylinder masses come from transfer-operator eigendata: with states the
    s-blocks (s = max(depth−1, 1)), left/right eigenvectors v, h normalized
    to Σ v_a h_a = 1,

        μ[w_0 .. w_{m-1}] = v_{B_0} (Π_j M_{B_j B_{j+1}} / ρ) h_{B_{m-s}},

    where B_j is the j-th s-block of w.  Exact to rounding.
    """

    def __init__(self, sys: SystemDescriptor, phi: Potential):
        from hypeq import pressure as _pressure
        if not sys.is_shift():
            raise ValueError("Gibbs oracle lives on shifts")
        eig = _pressure.sft_exact_pressure(sys, phi)
        self.sys = sys
        self.phi = phi
        self.eigen = eig
        self.s = eig.block_length
        self._states = {w: i for i, w in enumerate(eig.states)}
        self._M = np.asarray(eig.matrix)
        self._v = np.asarray(eig.left)
        self._h = np.asarray(eig.right)
        self._rho = eig.rho
        lut = np.full(sys.p ** self.s, -1, dtype=np.int64)
        for w, i in self._states.items():
            code = 0
            for c in w:
                code = code * sys.p + int(c)
            lut[code] = i
        self._lut = lut
        self._P = None  # normalized block chain, built on first use

    @property
    def pressure(self) -> float:
        return self.eigen.value

    def cylinder_mass(self, word: Sequence[int]) -> float:
        w = tuple(int(c) for c in word)
        s = self.s
        if len(w) < s:
            # sum over completions
            total = 0.0
            for st in self.eigen.states:
                if st[:len(w)] == w:
                    total += self.cylinder_mass(st)
            return total
        blocks = [w[j:j + s] for j in range(len(w) - s + 1)]
        try:
            idx = [self._states[b] for b in blocks]
        except KeyError:
            return 0.0
        val = self._v[idx[0]]
        for a, b in zip(idx, idx[1:]):
            if self._M[a, b] == 0.0:
                return 0.0
            val *= self._M[a, b] / self._rho
        return float(val * self._h[idx[-1]])

    def cylinder_mass_bulk(self, words: np.ndarray) -> np.ndarray:
        """Vectorized cylinder_mass over the rows of an (N, L) int array."""
        words = np.asarray(words, dtype=np.int64)
        if len(words) == 0:
            return np.zeros(0)
        if words.shape[1] < self.s:
            return np.array([self.cylinder_mass(w) for w in words])
        idx = self._lut[systems.word_window_codes(words, self.sys.p, self.s)]
        ok = (idx >= 0).all(axis=1)
        idx = np.where(idx < 0, 0, idx)
        val = self._v[idx[:, 0]] * self._h[idx[:, -1]]
        for j in range(idx.shape[1] - 1):
            val = val * self._M[idx[:, j], idx[:, j + 1]] / self._rho
        return np.where(ok, val, 0.0)

    def chain(self) -> tuple[np.ndarray, np.ndarray]:
        """Stationary distribution and transition matrix of the block chain.

        P_{ab} = M_{ab} h_b / (rho h_a) is stochastic; pi_a = v_a h_a is its
        stationary vector (the usual normalized transfer-operator form).
        """
        if self._P is None:
            self._P = self._M * self._h[None, :] / (self._rho * self._h[:, None])
            self._pi = self._v * self._h
        return self._pi, self._P

    def gibbs_constants(self) -> tuple[float, float]:
        """Certified (lo, hi) with lo <= mu(B_n(x, r)) / e^{-nP + S_n phi} <= hi.

        The chain mass and the weight agree transition by transition; what
        is left is the head eigenvector entry and s tail terms, each one
        positive M entry against a power of rho.
        """
        pos = self._M[self._M > 0]
        lo = self._v.min() * self._h.min() * (self._rho / pos.max()) ** self.s
        hi = self._v.max() * self._h.max() * (self._rho / pos.min()) ** self.s
        return float(min(lo, 1.0)), float(max(hi, 1.0))

    def sample(self, k: int, length: int, rng) -> np.ndarray:
        """k word rows of the given length, drawn from the stationary chain."""
        pi, P = self.chain()
        if length < self.s:
            raise ValueError(f"sample length must be at least {self.s}")
        states = np.asarray(self.eigen.states, dtype=np.int64)
        cum = np.cumsum(P, axis=1)
        cur = rng.choice(len(pi), size=k, p=pi / pi.sum())
        out = np.empty((k, length), dtype=np.int64)
        out[:, :self.s] = states[cur]
        for j in range(self.s, length):
            cur = np.minimum((rng.random(k)[:, None] > cum[cur]).sum(axis=1),
                             len(pi) - 1)
            out[:, j] = states[cur, -1]
        return out

    def exact_moments(self, dic: TestDictionary) -> np.ndarray:
        if dic.kind != "cylinder":
            raise ValueError("shift oracle needs a cylinder dictionary")
        return np.array([self.cylinder_mass(lab) for lab in dic.labels],
                        dtype=complex)

    def ball_mass(self, x, n: int, r: float) -> float:
        """μ(B_n(x, r)) for r in (1/2, 1): the depth-n cylinder of x."""
        if not (0.5 < r < 1.0):
            raise DynamicsError("shift Bowen balls need r in (1/2, 1)")
        w = [x.coord(i) for i in range(n)]
        if any(c is None for c in w):
            raise DynamicsError("point window does not determine the ball")
        return self.cylinder_mass(w)


# ---------------------------------------------------------------------------
# evolution and averaging


DEFAULT_ATOM_BUDGET = 200_000


def resample(mu: EmpiricalMeasure, budget: int, seed: int = 0) -> EmpiricalMeasure:
    """Stratified residual resampling down to `budget` equal-weight atoms.

    Deterministic given the seed.  Whole copies floor(budget * w_i) are kept
    outright; the remainder is filled by one stratified draw against the
    residual weights, which preserves dictionary moments to O(budget^{-1/2}).
    Measures already within budget pass through untouched.
    """
    if mu.size <= budget:
        return mu
    w = mu.weights / mu.total()
    counts = np.floor(budget * w).astype(np.int64)
    short = budget - int(counts.sum())
    if short > 0:
        resid = budget * w - counts
        rng = np.random.default_rng(seed)
        pos = (np.arange(short) + rng.random(short)) / short * resid.sum()
        idx = np.searchsorted(np.cumsum(resid), pos)
        counts += np.bincount(np.minimum(idx, len(w) - 1), minlength=len(w))
    keep = np.repeat(np.arange(mu.size), counts)
    meta = dict(mu.meta)
    meta.update(resampled_from=mu.size, resample_seed=seed)
    return EmpiricalMeasure(mu.sys, np.full(len(keep), 1.0 / budget),
                            None if mu.coords is None else mu.coords[keep],
                            None if mu.words is None else mu.words[keep],
                            mu.offset, meta)


def empirical_pushforward(mu: EmpiricalMeasure, steps: int = 1) -> EmpiricalMeasure:
    """f_* on an empirical measure: map atoms, or shift symbol windows left."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if steps == 0:
        return mu
    if mu.coords is not None:
        out = systems.apply_coords(mu.sys, mu.coords, steps)
        return EmpiricalMeasure(mu.sys, mu.weights.copy(), out, None, 0,
                                dict(mu.meta))
    if mu.offset != 0:
        raise DynamicsError("shift pushforward expects windows at offset 0")
    if mu.words.shape[1] - steps < 1:
        raise DynamicsError("atom windows too short to shift")
    uniq, inv = np.unique(mu.words[:, steps:], axis=0, return_inverse=True)
    w = np.zeros(len(uniq))
    np.add.at(w, inv, mu.weights)
    return EmpiricalMeasure(mu.sys, w, None, uniq, 0, dict(mu.meta))


def _leaf_to_empirical(m) -> EmpiricalMeasure:
    """View a LeafMeasure's cells as weighted atoms on ambient phase space."""
    chart = m.chart
    sys = chart.sys
    meta = {"source_chart": repr(chart.base), "order": m.order, "r": m.r}
    if m.kind == "cylinders":
        if sys.is_shift():
            return EmpiricalMeasure(sys, m.weights.copy(), words=m.words.copy(),
                                    meta=meta)
        # horseshoe: each strip cell at its leftmost attractor point
        xs = np.array([systems.horseshoe_u_coord(sys, w) for w in m.words])
        coords = np.column_stack([xs, np.full(len(xs), chart.base.y)])
        return EmpiricalMeasure(sys, m.weights.copy(), coords=coords, meta=meta)
    return EmpiricalMeasure(sys, m.weights.copy(),
                            coords=chart.arc_points(m.coords), meta=meta)


def evolve_average(sys: SystemDescriptor, phi: Potential, m, n: int, *,
                   budget: int = DEFAULT_ATOM_BUDGET,
                   seed: int = 0) -> EmpiricalMeasure:
    """(1/n) sum_{k<n} f_*^k m as a weighted atom cloud.

    `m` is a LeafMeasure or EmpiricalMeasure; it is normalized by its total
    mass first (the constant lands in meta["normalization"]).  Shift
    cylinders evolve exactly: the k-step image of a depth-N family is the
    depth-(N-k) suffix family, and all stages are truncated to the common
    depth N-n+1, so cylinder frequencies up to that depth are exact.
    Geometric atom clouds that outgrow `budget` are resampled (stratified
    residual, deterministic in `seed`).
    """
    if n < 1:
        raise ValueError("averaging length must be at least 1")
    base = m if isinstance(m, EmpiricalMeasure) else _leaf_to_empirical(m)
    if base.sys.family != sys.family or base.sys.p != sys.p:
        raise ValueError("measure was built for a different system")
    total = base.total()
    if total <= 0:
        raise ValueError("cannot evolve a null measure")
    w0 = base.weights / total
    meta = {"n": n, "normalization": total, "potential": phi.kind,
            "source": base.meta.get("source_chart", "empirical")}
    if base.words is not None:
        if base.offset != 0:
            raise DynamicsError("shift evolution expects windows at offset 0")
        depth = base.words.shape[1]
        if n > depth:
            raise DynamicsError(
                f"averaging length {n} exceeds the atom depth {depth}")
        d = depth - n + 1
        rows = np.concatenate([base.words[:, k:k + d] for k in range(n)])
        uniq, inv = np.unique(rows, axis=0, return_inverse=True)
        out = np.zeros(len(uniq))
        np.add.at(out, inv, np.tile(w0 / n, n))
        meta["depth"] = d
        return EmpiricalMeasure(sys, out, words=uniq, meta=meta)
    blocks = systems.orbit_coords(sys, base.coords, n)       # (M, n, d)
    coords = blocks.transpose(1, 0, 2).reshape(-1, blocks.shape[2])
    mu = EmpiricalMeasure(sys, np.repeat(w0 / n, n), coords=coords, meta=meta)
    if mu.size > budget:
        mu = resample(mu, budget, seed)
    return mu


# ---------------------------------------------------------------------------
# convergence diagnostics


@dataclass(frozen=True)
class ConvergenceReport:
    """Cauchy / leaf-independence traces of mu_n along an n schedule."""
    schedule: tuple
    cauchy: dict                  # leaf label -> successive discrepancies
    independence: tuple           # max pairwise discrepancy at each n
    reference: Optional[dict]     # leaf label -> discrepancy vs a target
    burn_in: int                  # schedule entries excluded from monotonicity
    cauchy_decreasing: bool
    independence_decreasing: bool
    passed: bool
    dictionary: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schedule": list(self.schedule),
                "cauchy": {k: list(v) for k, v in self.cauchy.items()},
                "independence": list(self.independence),
                "reference": None if self.reference is None else
                {k: list(v) for k, v in self.reference.items()},
                "burn_in": self.burn_in,
                "cauchy_decreasing": self.cauchy_decreasing,
                "independence_decreasing": self.independence_decreasing,
                "passed": self.passed, "dictionary": self.dictionary,
                "meta": self.meta}

    def trace_rows(self) -> list:
        """(n, diagnostic, value) rows, ready for a CSV trace."""
        rows = []
        for lab, vals in self.cauchy.items():
            rows += [(self.schedule[j + 1], f"cauchy[{lab}]", v)
                     for j, v in enumerate(vals)]
        rows += [(self.schedule[j], "independence", v)
                 for j, v in enumerate(self.independence)]
        for lab, vals in (self.reference or {}).items():
            rows += [(self.schedule[j], f"reference[{lab}]", v)
                     for j, v in enumerate(vals)]
        return rows


def _decreasing(vals, start: int) -> bool:
    # non-increasing past the burn-in, with 10% slack for sampling noise
    tail = [v for v in list(vals)[min(start, max(len(vals) - 1, 0)):]
            if not math.isnan(v)]
    return all(b <= 1.1 * a + 1e-12 for a, b in zip(tail, tail[1:]))


def convergence_report(sys: SystemDescriptor, phi: Potential, leaves,
                       schedule, dictionary: Optional[TestDictionary] = None,
                       *, reference=None, burn_in: float = 0.2,
                       budget: int = DEFAULT_ATOM_BUDGET,
                       seed: int = 0) -> ConvergenceReport:
    """Evolve each starting leaf along the schedule and diff the moments.

    The Cauchy diagnostic tracks discrepancy(mu_n, mu_n') between successive
    schedule entries per leaf; the independence diagnostic tracks the worst
    pairwise discrepancy across leaves at equal n.  Non-convergence is report
    content, not an error.
    """
    sched = [int(v) for v in schedule]
    if len(sched) < 2 or sorted(set(sched)) != sched:
        raise ValueError("schedule must be strictly increasing with >= 2 entries")
    leaves = list(leaves)
    if len(leaves) < 2:
        raise ValueError("need at least two starting leaves")
    dic = dictionary if dictionary is not None else default_dictionary(sys)
    moments = [[dictionary_moments(
        evolve_average(sys, phi, m, v, budget=budget, seed=seed), dic)
        for v in sched] for m in leaves]
    labels = [f"leaf{i}" for i in range(len(leaves))]
    cauchy = {lab: tuple(float(np.abs(a - b).max()) for a, b in zip(row, row[1:]))
              for lab, row in zip(labels, moments)}
    indep = tuple(
        max(float(np.abs(moments[a][j] - moments[b][j]).max())
            for a in range(len(leaves)) for b in range(a + 1, len(leaves)))
        for j in range(len(sched)))
    ref = None
    if reference is not None:
        target = dictionary_moments(reference, dic)
        ref = {lab: tuple(float(np.abs(mom - target).max()) for mom in row)
               for lab, row in zip(labels, moments)}
    skip = int(len(sched) * burn_in)
    c_ok = all(_decreasing(v, max(0, skip - 1)) for v in cauchy.values())
    i_ok = _decreasing(indep, skip)
    return ConvergenceReport(
        tuple(sched), cauchy, indep, ref, skip, c_ok, i_ok, c_ok and i_ok,
        dic.describe(), {"budget": budget, "seed": seed, "burn_in": burn_in})


# ---------------------------------------------------------------------------
# Gibbs property and the variational identity


@dataclass(frozen=True)
class GibbsReport:
    n_values: tuple
    max_ratio: float
    min_ratio: float
    spread_by_n: tuple            # (n, max/min ratio across samples)
    window_growth: float          # spread growth, first to last ball order
    skipped: int
    samples: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"n_values": list(self.n_values), "max_ratio": self.max_ratio,
                "min_ratio": self.min_ratio,
                "spread_by_n": [list(t) for t in self.spread_by_n],
                "window_growth": self.window_growth, "skipped": self.skipped,
                "samples": self.samples, "meta": self.meta}


@dataclass(frozen=True)
class VariationalReport:
    residual: float
    entropy: float                # mean of -(1/n) log mu(B_n(x, r))
    energy: float                 # mean of (1/n) S_n phi(x)
    pressure: float
    n: int
    samples: int
    skipped: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "entropy": self.entropy,
                "energy": self.energy, "pressure": self.pressure,
                "n": self.n, "samples": self.samples,
                "skipped": self.skipped, "meta": self.meta}


def _sample_points(mu, sys, samples, need, rng):
    """Sample atoms/points of mu: word rows for shifts, coords otherwise."""
    if isinstance(mu, EmpiricalMeasure):
        idx = rng.choice(mu.size, size=samples,
                         p=mu.weights / mu.weights.sum())
        if mu.words is not None:
            if mu.offset != 0:
                raise DynamicsError("shift samples need windows at offset 0")
            if mu.words.shape[1] < need:
                raise DynamicsError(
                    f"atom windows carry {mu.words.shape[1]} symbols, "
                    f"need {need} for the probed ball orders")
            return mu.words[idx]
        return mu.coords[idx]
    if sys.is_shift():
        return mu.sample(samples, need, rng)
    return mu.sample(samples, rng)


def _ball_masses(mu, sys, pts, n, r):
    """mu(B_n(x, r)) per sample; second return is atom counts (-1 = exact)."""
    if isinstance(mu, EmpiricalMeasure):
        if mu.words is not None:
            hits = (mu.words[None, :, :n] == pts[:, None, :n]).all(axis=2)
            return hits @ mu.weights, hits.sum(axis=1)
        blocks = systems.orbit_coords(sys, mu.coords, n)
        sblocks = systems.orbit_coords(sys, pts, n)
        masses = np.empty(len(pts))
        counts = np.empty(len(pts), dtype=np.int64)
        for i, sb in enumerate(sblocks):    # chunked: S x M x n is too big
            hit = systems.dyn_metric_blocks(sys, sb[None], blocks) <= r
            counts[i] = hit.sum()
            masses[i] = mu.weights[hit].sum()
        return masses, counts
    if isinstance(mu, SftGibbsMeasure):
        if not (0.5 < r < 1.0):
            raise DynamicsError("shift Bowen balls need r in (1/2, 1)")
        return mu.cylinder_mass_bulk(pts[:, :n]), np.full(len(pts), -1)
    masses = np.array([mu.ball_mass(_point_from_coords(sys, row), n, r)
                       for row in pts])
    return masses, np.full(len(pts), -1, dtype=np.int64)


def _sample_birkhoff(sys, phi, pts, n):
    if sys.is_shift():
        if phi.kind == "locally_constant" and phi.offset != 0:
            raise DynamicsError("sampled Birkhoff sums need offset-0 potentials")
        return systems.birkhoff_sum_words(sys, phi, pts, n)
    return systems.birkhoff_sum_coords(sys, phi, pts, n)


def _need_length(phi, nmax):
    return nmax + (phi.depth - 1 if phi.kind == "locally_constant" else 0)


def gibbs_check(mu, sys: SystemDescriptor, phi: Potential, pressure: float, *,
                samples: int = 64, n_range: Optional[Sequence[int]] = None,
                r: Optional[float] = None, seed: int = 0, points=None,
                min_atoms: int = 50) -> GibbsReport:
    """Ratios mu(B_n(x, r)) / e^{-n P + S_n phi(x)} over sampled x and n.

    mu may be an EmpiricalMeasure — ball masses are then summed from atoms,
    and any ball holding fewer than min_atoms atoms is skipped and counted —
    or an exact oracle with a ball_mass/cylinder_mass method, where nothing
    is skipped.  Samples are drawn from mu itself unless points are passed.
    """
    if sys.is_shift():
        r = 0.75 if r is None else r
        if n_range is None:
            if isinstance(mu, EmpiricalMeasure):
                top = mu.words.shape[1] - (_need_length(phi, 0))
                n_range = range(max(2, top // 2), top + 1)
            else:
                n_range = range(4, 11)
    else:
        r = 0.05 if r is None else r
        n_range = range(4, 11) if n_range is None else n_range
    ns = sorted(set(int(v) for v in n_range))
    if not ns or ns[0] < 1:
        raise ValueError("ball orders must be positive")
    rng = np.random.default_rng(seed)
    pts = points if points is not None else _sample_points(
        mu, sys, samples, _need_length(phi, ns[-1]), rng)
    skipped = 0
    spread = []
    lo, hi = math.inf, -math.inf
    for n in ns:
        masses, counts = _ball_masses(mu, sys, pts, n, r)
        denom = np.exp(-pressure * n + _sample_birkhoff(sys, phi, pts, n))
        ok = (masses > 0) & ((counts < 0) | (counts >= min_atoms))
        skipped += int((~ok).sum())
        if not ok.any():
            spread.append((n, math.nan))
            continue
        q = masses[ok] / denom[ok]
        lo, hi = min(lo, q.min()), max(hi, q.max())
        spread.append((n, float(q.max() / q.min())))
    widths = [s for _, s in spread if not math.isnan(s)]
    growth = (widths[-1] / widths[0] - 1.0) if len(widths) > 1 else 0.0
    return GibbsReport(tuple(ns), float(hi), float(lo), tuple(spread),
                       float(growth), skipped, len(pts),
                       {"r": r, "pressure": pressure, "seed": seed,
                        "oracle": not isinstance(mu, EmpiricalMeasure)})


def variational_check(mu, sys: SystemDescriptor, phi: Potential,
                      pressure: float, *, samples: int = 256, n: int = 14,
                      r: Optional[float] = None, seed: int = 0, points=None,
                      min_atoms: int = 50) -> VariationalReport:
    """|mean[-(1/n) log mu(B_n(x, r)) + (1/n) S_n phi(x)] - P| over samples.

    The first term reads the local entropy off ball masses, the second the
    energy; their sum estimates the variational supremum, which the Gibbs
    property pins at P.
    """
    if r is None:
        r = 0.75 if sys.is_shift() else 0.05
    rng = np.random.default_rng(seed)
    pts = points if points is not None else _sample_points(
        mu, sys, samples, _need_length(phi, n), rng)
    masses, counts = _ball_masses(mu, sys, pts, n, r)
    ok = (masses > 0) & ((counts < 0) | (counts >= min_atoms))
    if not ok.any():
        raise DynamicsError("every sampled ball was under-resolved")
    entropy = float(-(np.log(masses[ok]) / n).mean())
    energy = float((_sample_birkhoff(sys, phi, pts, n)[ok] / n).mean())
    return VariationalReport(abs(entropy + energy - pressure), entropy,
                             energy, pressure, n, int(ok.sum()),
                             int((~ok).sum()), {"r": r, "seed": seed})


# ---------------------------------------------------------------------------
# conditional measures on rectangles

# Shift rectangles are words at offset -m <= 0: m past symbols fix the
# transversal, the rest is the future constraint.  The refining partitions
# xi_l extend the past by l symbols, so nesting intersects down to the
# unstable slice V_R^u(y).  On the torus, rectangles are u,s-aligned
# parallelograms (the eigenbasis is orthonormal, so Lebesgue factors
# exactly) and xi_l splits the stable side dyadically.


@dataclass(frozen=True)
class TorusRectangle:
    """{center + u e_u + s e_s : |u| <= a, |s| <= b}, small enough to embed."""
    center: object
    a: float
    b: float

    def __post_init__(self):
        if not (0 < self.a <= 0.2 and 0 < self.b <= 0.2):
            raise ValueError("rectangle half-widths must lie in (0, 0.2]")


@dataclass(frozen=True)
class ConditionalEstimate:
    """Normalized mu-mass on xi_l(y)-slices, per leaf, depth, and future cell."""
    kind: str                     # "shift" | "torus"
    depths: tuple
    leaves: tuple                 # probed pasts (words) or s-offsets (torus)
    cells: tuple                  # future words, or u-intervals (lo, hi)
    vectors: np.ndarray           # (leaf, depth, cell) conditional weights
    stabilization: np.ndarray     # (leaf, depth-1) sup diffs between levels
    masses: np.ndarray            # (leaf, depth) raw restricted masses
    meta: dict = field(default_factory=dict)

    def final(self) -> np.ndarray:
        """Conditional vectors at the deepest partition level."""
        return self.vectors[:, -1]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "depths": list(self.depths),
                "leaves": [list(l) if isinstance(l, tuple) else float(l)
                           for l in self.leaves],
                "cells": [list(c) for c in self.cells],
                "vectors": self.vectors.tolist(),
                "stabilization": self.stabilization.tolist(),
                "masses": self.masses.tolist(), "meta": self.meta}


def _rect_parts(rect: SymbolWord):
    m = max(0, -rect.offset)
    if rect.offset > 0 or len(rect.symbols) < m:
        raise DynamicsError("rectangle words must reach coordinate 0 "
                            "from offset -m")
    return tuple(rect.symbols[:m]), tuple(rect.symbols[m:])


def _admissible_cells(gibbs, past, fut, future_depth):
    sys = gibbs.sys
    cand = systems.admissible_words(sys, future_depth)
    if fut:
        cand = cand[(cand[:, :len(fut)] == np.asarray(fut)).all(axis=1)]
    if past:
        probe = np.concatenate(
            [np.tile(np.asarray(past, dtype=np.int64), (len(cand), 1)), cand],
            axis=1)
        cand = cand[gibbs.cylinder_mass_bulk(probe) > 0]
    return cand


def conditional_estimate(mu, rect, *, future_depth: Optional[int] = None,
                         depths: Sequence[int] = (1, 2, 3, 4, 5, 6),
                         leaves=None, leaf_cap: int = 64,
                         seed: int = 0) -> ConditionalEstimate:
    """Conditional weights of mu on unstable slices of a rectangle.

    For each probed leaf y and partition depth l, the weight vector is the
    normalized mu-mass of the future cells inside xi_l(y); the stabilization
    diagnostic is the sup-norm change between successive depths (Markov
    measures stabilize exactly once l reaches the memory length).
    """
    depths = tuple(int(v) for v in depths)
    if not depths or list(depths) != sorted(set(depths)) or depths[0] < 1:
        raise ValueError("partition depths must be increasing and positive")
    if depths[-1] > 8:
        raise ValueError("partition depths are capped at 8")
    if isinstance(rect, TorusRectangle):
        return _torus_conditional(mu, rect, future_depth or 3, depths, leaves)
    if not isinstance(mu, SftGibbsMeasure):
        raise TypeError("conditional machinery needs an exact shift measure "
                        "or the Lebesgue oracle with a torus rectangle")
    sys = mu.sys
    past, fut = _rect_parts(rect)
    fd = (len(fut) + 2) if future_depth is None else int(future_depth)
    if fd < max(len(fut), 1):
        raise ValueError("future depth must extend the rectangle's future word")
    cells = _admissible_cells(mu, past, fut, fd)
    if len(cells) == 0:
        raise DynamicsError("rectangle has no admissible future cells")
    lmax = depths[-1]
    if leaves is None:
        cand = systems.admissible_words(sys, lmax)
        probe = np.concatenate(
            [cand, np.tile(np.asarray(past + fut, dtype=np.int64),
                           (len(cand), 1))], axis=1)
        cand = cand[mu.cylinder_mass_bulk(probe) > 0]
        if len(cand) == 0:
            raise DynamicsError("rectangle has no admissible leaves")
        if len(cand) > leaf_cap:
            pick = np.random.default_rng(seed).choice(
                len(cand), size=leaf_cap, replace=False)
            cand = cand[np.sort(pick)]
        leaves = cand
    else:
        leaves = np.asarray([tuple(int(c) for c in l) for l in leaves],
                            dtype=np.int64)
        if leaves.shape[1] < lmax:
            raise ValueError(f"leaf pasts must carry at least {lmax} symbols")
    pastarr = np.asarray(past, dtype=np.int64).reshape(1, -1)
    vectors = np.empty((len(leaves), len(depths), len(cells)))
    masses = np.empty((len(leaves), len(depths)))
    for i, leaf in enumerate(leaves):
        for j, l in enumerate(depths):
            head = np.tile(np.concatenate([leaf[len(leaf) - l:],
                                           pastarr[0]]), (len(cells), 1))
            vals = mu.cylinder_mass_bulk(np.concatenate([head, cells], axis=1))
            tot = vals.sum()
            if tot <= 0:
                raise DynamicsError(
                    f"empty partition element at depth {l} "
                    f"(past {tuple(leaf[len(leaf) - l:])})")
            vectors[i, j] = vals / tot
            masses[i, j] = tot
    stab = np.abs(np.diff(vectors, axis=1)).max(axis=2) if len(depths) > 1 \
        else np.zeros((len(leaves), 0))
    return ConditionalEstimate(
        "shift", depths, tuple(tuple(int(c) for c in l) for l in leaves),
        tuple(tuple(int(c) for c in u) for u in cells), vectors, stab, masses,
        {"rect": repr(rect), "rect_past": tuple(int(c) for c in past),
         "future_depth": fd})


def _torus_conditional(mu, rect, fd, depths, leaves):
    if not isinstance(mu, LebesgueTorus):
        raise TypeError("torus rectangles pair with the Lebesgue oracle")
    if leaves is None:
        leaves = tuple(-rect.b + (2 * j + 1) * rect.b / 8 for j in range(8))
    svals = [float(s) for s in leaves]
    if any(abs(s) > rect.b for s in svals):
        raise ValueError("leaf offsets fall outside the rectangle")
    edges = np.linspace(-rect.a, rect.a, 2 ** fd + 1)
    cells = tuple((float(a), float(b)) for a, b in zip(edges, edges[1:]))
    vectors = np.empty((len(svals), len(depths), len(cells)))
    masses = np.empty((len(svals), len(depths)))
    for i in range(len(svals)):
        for j, l in enumerate(depths):
            slab = 2.0 * rect.b / 2 ** l
            # Fubini in the orthonormal (e_u, e_s) frame: area = du * ds,
            # so which slab holds the leaf never enters the normalized vector
            vals = np.array([(b - a) * slab for a, b in cells])
            masses[i, j] = vals.sum()
            vectors[i, j] = vals / vals.sum()
    stab = np.abs(np.diff(vectors, axis=1)).max(axis=2) if len(depths) > 1 \
        else np.zeros((len(svals), 0))
    return ConditionalEstimate("torus", depths, tuple(svals), cells, vectors,
                               stab, masses,
                               {"rect": (rect.a, rect.b), "future_depth": fd})


@dataclass(frozen=True)
class ConditionalComparison:
    min_ratio: float              # over cells and leaves, deepest level
    max_ratio: float
    q3: float                     # worst per-leaf spread at the deepest level
    spread_by_depth: tuple        # (depth, worst spread across leaves)
    window_growth: float
    passed: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"min_ratio": self.min_ratio, "max_ratio": self.max_ratio,
                "q3": self.q3,
                "spread_by_depth": [list(t) for t in self.spread_by_depth],
                "window_growth": self.window_growth, "passed": self.passed,
                "meta": self.meta}


def conditional_vs_reference_check(cond: ConditionalEstimate, references=None,
                                   *, sys=None, phi=None,
                                   r: float = 0.75) -> ConditionalComparison:
    """Ratio of conditional weights to the leaf reference measure m_y^C.

    references may be prebuilt LeafMeasures aligned with cond.leaves; absent
    that, they are built on each probed leaf (shift kind needs sys and phi).
    The density ratio is reported raw — equivalence shows up as a bounded
    spread, exactly 1 for product measures.
    """
    if cond.kind == "torus":
        ref = [np.array([b - a for a, b in cond.cells])] * len(cond.leaves)
    elif references is not None:
        ref = []
        for lm in references:
            table = {tuple(int(c) for c in w): wt
                     for w, wt in zip(lm.words, lm.weights)}
            ref.append(np.array([table.get(u, 0.0) for u in cond.cells]))
    else:
        if sys is None or phi is None:
            raise ValueError("pass prebuilt references, or sys and phi")
        from hypeq import refmeasure
        ref = []
        for leaf in cond.leaves:
            past = leaf + tuple(cond.meta.get("rect_past", ()))
            base = systems.word(sys, past, offset=-len(past))
            lm = refmeasure.build_reference_measure(
                sys, phi, systems.leaf_chart(sys, base), r,
                cond.meta["future_depth"])
            table = {tuple(int(c) for c in w): wt
                     for w, wt in zip(lm.words, lm.weights)}
            ref.append(np.array([table.get(u, 0.0) for u in cond.cells]))
    spreads = []
    lo = hi = None
    for j in range(len(cond.depths)):
        worst = 1.0
        for i in range(len(cond.leaves)):
            v = cond.vectors[i, j]
            w = ref[i]
            live = v > 0
            if (w[live] <= 0).any():
                raise DynamicsError("conditional charges a cell the "
                                    "reference misses")
            q = v[live] / w[live]
            worst = max(worst, float(q.max() / q.min()))
            if j == len(cond.depths) - 1:
                lo = float(q.min()) if lo is None else min(lo, float(q.min()))
                hi = float(q.max()) if hi is None else max(hi, float(q.max()))
        spreads.append((cond.depths[j], worst))
    growth = spreads[-1][1] / spreads[0][1] - 1.0
    return ConditionalComparison(lo, hi, spreads[-1][1], tuple(spreads),
                                 float(growth), growth < 0.10,
                                 {"kind": cond.kind})


@dataclass(frozen=True)
class ProductReport:
    """Local product structure: mu(R) vs transverse x conditional masses."""
    min_ratio: float
    max_ratio: float
    window: float                 # certified two-sided bound on the ratio
    spread_by_depth: tuple        # (past depth, max/min ratio)
    window_growth: float
    cells: int
    passed: bool
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"min_ratio": self.min_ratio, "max_ratio": self.max_ratio,
                "window": self.window,
                "spread_by_depth": [list(t) for t in self.spread_by_depth],
                "window_growth": self.window_growth, "cells": self.cells,
                "passed": self.passed, "meta": self.meta}


def product_structure_check(mu: SftGibbsMeasure, rect, p_past, *,
                            past_depths: Sequence[int] = (1, 2, 3, 4),
                            future_depth: Optional[int] = None) -> ProductReport:
    """mu(e.past.u) against mu~(e) x mu(u | reference leaf), cell by cell.

    e ranges over admissible pasts of each probed depth, u over future cells;
    mu~(e) is the rectangle-restricted transverse mass and the conditional is
    taken on the leaf through p_past.  The certified window comes from the
    Gibbs constants: the cross-ratio cancels all but the junction factors.
    """
    if not isinstance(mu, SftGibbsMeasure):
        raise TypeError("product structure check needs an exact shift measure")
    sys = mu.sys
    past, fut = _rect_parts(rect)
    m = len(past)
    fd = (len(fut) + 2) if future_depth is None else int(future_depth)
    cells = _admissible_cells(mu, past, fut, fd)
    if len(cells) == 0:
        raise DynamicsError("rectangle has no admissible future cells")
    p_past = tuple(int(c) for c in p_past)
    head = np.asarray(p_past + past, dtype=np.int64)
    condn = mu.cylinder_mass_bulk(
        np.concatenate([np.tile(head, (len(cells), 1)), cells], axis=1))
    tot = condn.sum()
    if tot <= 0:
        raise DynamicsError("reference leaf misses the rectangle")
    condp = condn / tot
    pastarr = np.asarray(past, dtype=np.int64)
    lo, hi = math.inf, -math.inf
    spreads = []
    ncells = 0
    for d in sorted(set(int(v) for v in past_depths)):
        pasts = systems.admissible_words(sys, d)
        rows = np.concatenate([pasts, np.tile(pastarr, (len(pasts), 1))],
                              axis=1) if m else pasts
        # transverse mass of each e inside R: sum over the future cells
        tr = np.zeros(len(pasts))
        lhs = np.empty((len(pasts), len(cells)))
        for k, u in enumerate(cells):
            full = np.concatenate([rows, np.tile(u, (len(rows), 1))], axis=1)
            lhs[:, k] = mu.cylinder_mass_bulk(full)
            tr += lhs[:, k]
        live = tr > 0
        if not live.any():
            continue
        num = lhs[live]
        den = tr[live, None] * condp[None, :]
        mask = num > 0
        if (den[mask] <= 0).any():
            raise DynamicsError("reference leaf misses a charged future cell")
        q = num[mask] / den[mask]
        lo, hi = min(lo, q.min()), max(hi, q.max())
        spreads.append((d, float(q.max() / q.min())))
        ncells += int(mask.sum())
    if not spreads:
        raise DynamicsError("no admissible transversals met the rectangle")
    # Certified window.  With the past at least one memory block deep the
    # continuation factor is independent of the transversal and the
    # cross-ratio telescopes exactly; otherwise at most s transitions
    # straddle each junction, each off by one M-entry ratio.
    if m >= mu.s:
        window = 1.0
    else:
        ent = mu._M[mu._M > 0]
        window = float((ent.max() / ent.min()) ** (2 * mu.s))
    growth = spreads[-1][1] / spreads[0][1] - 1.0 if len(spreads) > 1 else 0.0
    passed = (hi <= window * (1 + 1e-9) and 1.0 / lo <= window * (1 + 1e-9)
              and growth < 0.10)
    return ProductReport(float(lo), float(hi), float(window), tuple(spreads),
                         float(growth), ncells, passed,
                         {"rect": repr(rect), "p_past": p_past,
                          "future_depth": fd})


# ---------------------------------------------------------------------------
# pushforward of conditionals


@dataclass(frozen=True)
class PushforwardReport:
    """Discrepancy of (1/n) sum_{k<n} f_*^k nu against mu along a schedule."""
    schedule: tuple
    values: tuple
    decreasing: bool
    final: float
    dictionary: dict
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schedule": list(self.schedule), "values": list(self.values),
                "decreasing": self.decreasing, "final": self.final,
                "dictionary": self.dictionary, "meta": self.meta}

    def trace_rows(self) -> list:
        return [(n, "pushforward_discrepancy", v)
                for n, v in zip(self.schedule, self.values)]


def pushforward_conditional_check(sys: SystemDescriptor, mu: SftGibbsMeasure,
                                  nu: EmpiricalMeasure, schedule,
                                  dictionary: Optional[TestDictionary] = None,
                                  *, element=None) -> PushforwardReport:
    """Exact discrepancy(nu_n, mu) for nu_n = (1/n) sum_{k<n} f_*^k nu.

    nu is a finitely-supported measure on depth-D cylinders, absolutely
    continuous with respect to mu (typically a conditional slice).  Moments
    of f_*^k nu are computed in closed form: for k < D the shifted windows
    are read off directly, with cylinder tails extended by mu-masses through
    the density g = nu(w)/mu(w); for k >= D the density state propagates
    through the normalized block chain, so arbitrarily long schedules cost
    one matrix-vector product per step.
    """
    if not isinstance(mu, SftGibbsMeasure):
        raise TypeError("pushforward check needs an exact shift measure")
    if nu.words is None or nu.offset != 0:
        raise ValueError("nu must live on offset-0 symbol windows")
    if abs(nu.total() - 1.0) > 1e-9:
        raise ValueError("nu must be a probability measure")
    sched = sorted(set(int(v) for v in schedule))
    if not sched or sched[0] < 1:
        raise ValueError("schedule entries must be positive")
    D = nu.words.shape[1]
    s = mu.s
    if D < s:
        raise DynamicsError("nu windows must cover at least one transfer block")
    mass = mu.cylinder_mass_bulk(nu.words)
    if (mass <= 0).any():
        raise DynamicsError("nu charges a cylinder of zero mu-mass")
    dic = dictionary if dictionary is not None else default_dictionary(sys)
    if dic.kind != "cylinder":
        raise ValueError("pushforward moments need a cylinder dictionary")
    labels = [np.asarray(u, dtype=np.int64) for u in dic.labels]
    g = nu.weights / mass                       # density d nu / d mu on atoms
    pi, P = mu.chain()
    states = np.asarray(mu.eigen.states, dtype=np.int64)
    nstates = len(states)
    # density state at block position D - s: nu-mass by final block of w
    last = systems.word_window_codes(nu.words[:, D - s:], sys.p, s)[:, 0]
    nustate = np.zeros(nstates)
    np.add.at(nustate, mu._lut[last], nu.weights)
    # C[b, u] = mu(x matches u | block state is b): overlap, not extension
    stat = mu.cylinder_mass_bulk(states)
    targets = np.array([mu.cylinder_mass(u) for u in labels])
    C = np.zeros((nstates, len(labels)))
    for j, u in enumerate(labels):
        if len(u) <= s:
            C[:, j] = (states[:, :len(u)] == u[None]).all(axis=1)
        else:
            hit = (states == u[None, :s]).all(axis=1) & (stat > 0)
            C[hit, j] = targets[j] / stat[hit]
    # moments of f_*^k nu for every k up to max(schedule)
    nmax = sched[-1]
    mom = np.empty((nmax, len(labels)))
    for k in range(min(nmax, D)):
        for j, u in enumerate(labels):
            o = len(u)
            if k + o <= D:
                hit = (nu.words[:, k:k + o] == u[None]).all(axis=1)
                mom[k, j] = nu.weights[hit].sum()
            else:
                # shifted window runs past the atoms: extend by mu through g
                hit = (nu.words[:, k:] == u[None, :D - k]).all(axis=1)
                if hit.any():
                    ext = np.concatenate(
                        [nu.words[hit],
                         np.tile(u[D - k:], (int(hit.sum()), 1))], axis=1)
                    mom[k, j] = (g[hit] * mu.cylinder_mass_bulk(ext)).sum()
                else:
                    mom[k, j] = 0.0
    if nmax > D:
        state = nustate
        for _ in range(s):              # advance block position D - s -> D
            state = state @ P
        for k in range(D, nmax):
            mom[k] = state @ C
            state = state @ P
    cum = np.cumsum(mom, axis=0)
    disc = [float(np.abs(cum[n - 1] / n - targets).max()) for n in sched]
    dec = all(b <= a + 1e-12 for a, b in zip(disc, disc[1:]))
    return PushforwardReport(tuple(sched), tuple(disc), dec, disc[-1],
                             dic.describe(),
                             {"depth": D, "element": element,
                              "atoms": int(nu.size)})
