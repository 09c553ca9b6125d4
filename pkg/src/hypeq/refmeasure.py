"""Reference measures on unstable leaves.

A leaf measure discretizes the weighted-cover construction at a single cell
order: the order-n measure puts weight e^{-n P + S_n phi(x_s)} on each
order-n u-Bowen cell of the charted leaf, with x_s the chart-lexicographically
least sample of the cell.  On shift charts the cells are admissible words and
the weights are exact; on arc charts (cat map, solenoid) the cells are a
tiling by leaf intervals of radius r * lam^-(n-1).

The defining properties are verified empirically rather than assumed:
bounded total mass across base points and orders (`mass_bounds_check`),
conformal scaling with density e^{P - phi} under the map (`scaling_check`),
the u-Gibbs ratio bounds (`u_gibbs_check`), and invariance under stable
holonomy (`holonomy_equivalence_check`).  Weight computation is vectorized
over cells; measures are immutable once built and every check is read-only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import caratheodory
from . import pressure as pressure_mod
from . import systems
from .systems import (BracketError, DynamicsError, LeafChart, Potential,
                      SystemDescriptor)

__all__ = [
    "LeafMeasure", "Holonomy", "MassBoundsReport", "ScalingReport",
    "GibbsRatioReport", "HolonomyReport", "CoverAgreement",
    "resolve_pressure", "build_reference_measure", "transfer_gibbs_weights",
    "mass_bounds_check", "pushforward", "scaling_check",
    "iterated_scaling_check", "u_gibbs_check",
    "holonomy", "holonomy_apply", "holonomy_equivalence_check",
    "cover_consistency_check", "measure_from_dict",
]

_ATOM_BUDGET = 1 << 22


# ---------------------------------------------------------------------------
# pressure calibration
#
# The weight e^{-nP} compounds any error in P exponentially, so exact values
# take precedence: spectral radius on shifts, entropy plus the constant
# potential value on the geometric families, and only then a numerical
# estimate.


def resolve_pressure(sys: SystemDescriptor, phi: Potential,
                     r: float = 0.05) -> tuple[float, str]:
    """(P, source) with source one of sft_exact / analytic / estimate."""
    if sys.is_shift() and phi.kind in ("zero", "geometric_t", "locally_constant"):
        phi0 = phi
        if phi.kind == "locally_constant" and phi.offset != 0:
            # sliding the reading frame is a conjugacy; pressure is unchanged
            phi0 = replace(phi, offset=0)
        return pressure_mod.sft_exact_pressure(sys, phi0).value, "sft_exact"
    if phi.is_constant():
        h_top = math.log(2.0) if sys.family == "horseshoe" \
            else math.log(sys.expansion)
        return h_top + systems.geometric_constant(sys, phi), "analytic"
    try:
        est = pressure_mod.pressure_estimate(sys, phi, r, range(4, 13))
    except (ValueError, DynamicsError) as exc:
        raise ValueError(
            f"no pressure value available for {phi.kind} on {sys.family}; "
            f"pass pressure= explicitly ({exc})") from exc
    return est.value, "estimate"


# ---------------------------------------------------------------------------
# the measure


@dataclass(frozen=True, eq=False)
class LeafMeasure:
    """Order-n cell weights on a charted unstable leaf.

    kind "cylinders": cells are the rows of `words` (admissible order-n
    words continuing the chart's past), lex order.  kind "atoms": cells are
    leaf intervals of radius cell_radius(order, r) centered at `coords`.
    Weights are raw (unnormalized); Theorem-style mass bounds are statements
    about the raw total, so consumers normalize explicitly.
    """

    chart: LeafChart
    kind: str
    order: int
    weights: np.ndarray
    pressure: float
    pressure_source: str
    potential: Potential
    r: float
    words: Optional[np.ndarray] = None
    coords: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order >= 1")
        if (self.weights < 0).any():
            raise ValueError("weights must be nonnegative")
        cells = len(self.words) if self.kind == "cylinders" else len(self.coords)
        if len(self.weights) != cells:
            raise ValueError("one weight per cell")

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def potential_tag(self) -> str:
        phi = self.potential
        if phi.kind == "locally_constant":
            return f"locally_constant[depth={phi.depth},offset={phi.offset}]"
        if phi.kind == "geometric_t":
            return f"geometric[t={phi.t:g}]"
        return phi.kind

    def cell_radius(self) -> float:
        if self.kind != "atoms":
            raise ValueError("cell_radius applies to atom measures")
        return self.chart.cell_radius(self.order, self.r)

    def to_dict(self) -> dict:
        d = {"schema_version": 1,
             "system": systems.descriptor_to_dict(self.chart.sys),
             "chart": {"base": systems.point_to_dict(self.chart.base),
                       "tau": self.chart.tau, "kind": self.chart.kind},
             "order": self.order, "r": self.r,
             "pressure": self.pressure, "pressure_source": self.pressure_source,
             "potential": systems.potential_to_dict(self.potential),
             "kind": self.kind,
             "weights": [float(w) for w in self.weights],
             "total_mass": self.total_mass,
             "meta": dict(self.meta)}
        if self.kind == "cylinders":
            d["words"] = [[int(c) for c in w] for w in self.words]
        else:
            d["coords"] = [float(t) for t in self.coords]
        return d


def measure_from_dict(d: dict) -> LeafMeasure:
    sys = systems.descriptor_from_dict(d["system"])
    base = systems.point_from_dict(d["chart"]["base"])
    chart = LeafChart(sys, base, float(d["chart"]["tau"]), d["chart"]["kind"])
    words = coords = None
    if d["kind"] == "cylinders":
        words = np.asarray(d["words"], dtype=np.int64)
    else:
        coords = np.asarray(d["coords"], dtype=float)
    return LeafMeasure(chart=chart, kind=d["kind"], order=int(d["order"]),
                       weights=np.asarray(d["weights"], dtype=float),
                       pressure=float(d["pressure"]),
                       pressure_source=d["pressure_source"],
                       potential=systems.potential_from_dict(sys, d["potential"]),
                       r=float(d["r"]), words=words, coords=coords,
                       meta=dict(d.get("meta", {})))


# ---------------------------------------------------------------------------
# construction


def _chart_words(sys: SystemDescriptor, chart: LeafChart, n: int):
    """Admissible order-n words on the charted leaf, plus the past symbols."""
    if sys.family == "horseshoe":
        idx = np.arange(1 << n, dtype=np.int64)
        shifts = np.arange(n - 1, -1, -1)
        return ((idx[:, None] >> shifts) & 1).astype(np.int64), ()
    words = systems.admissible_words(sys, n)
    past = chart.past_symbols()
    if past and sys.family == "sft":
        A = np.asarray(sys.transition)
        words = words[A[past[-1], words[:, 0]] == 1]
    return words, past


def _word_birkhoff(sys: SystemDescriptor, phi: Potential, past: tuple,
                   words: np.ndarray, n: int) -> np.ndarray:
    """S_n phi at the lex-least representative of each word cell."""
    if phi.is_constant():
        return np.full(len(words),
                       n * systems.evaluate_potential_word_constant(sys, phi))
    if phi.kind != "locally_constant":
        raise DynamicsError("shift weights need a symbolic potential")
    if phi.offset > 0:
        raise DynamicsError("anticipating reading frames are not supported")
    m = -phi.offset
    rows = systems.lex_least_tail(sys, words, max(phi.depth - 1 - m, 0))
    if m:
        if len(past) < m:
            raise DynamicsError(
                f"weights read coordinate {phi.offset} but the chart base "
                f"fixes only {len(past)} past symbols")
        block = np.tile(np.array(past[-m:], dtype=rows.dtype), (len(rows), 1))
        rows = np.hstack([block, rows])
        phi = replace(phi, offset=0)
    return systems.birkhoff_sum_words(sys, phi, rows, n)


def _arc_centers(chart: LeafChart, order: int, r: float):
    h = chart.cell_radius(order, r)
    count = int(math.floor(2 * chart.tau / (2 * h))) + 1
    if count > _ATOM_BUDGET:
        raise ValueError(f"order {order} exceeds the atom budget "
                         f"({count} cells > {_ATOM_BUDGET})")
    centers = -chart.tau + h + 2 * h * np.arange(count)
    centers = np.minimum(centers, chart.tau - h) if h <= chart.tau \
        else np.array([0.0])
    return centers, h


def build_reference_measure(sys: SystemDescriptor, phi: Potential,
                            chart: LeafChart, r: float, order: int,
                            pressure: Optional[float] = None) -> LeafMeasure:
    """The order-n reference measure on `chart`.

    Weight of cell s is e^{-n P + S_n phi(x_s)}, x_s the lex-least sample:
    the lex-least admissible tail on word cells, the left endpoint on arc
    cells.  P defaults to the best available value (see resolve_pressure)
    and is recorded with its provenance.
    """
    if order < 1:
        raise ValueError("order >= 1")
    if chart.sys.family != sys.family or chart.sys.p != sys.p:
        raise ValueError("chart was built for a different system")
    if pressure is None:
        p_hat, source = resolve_pressure(sys, phi)
    else:
        p_hat, source = float(pressure), "supplied"

    if chart.kind == "tree":
        if not 0.5 < r < 1.0:
            raise ValueError(f"word cells need 1/2 < r < 1, got r={r}")
        words, past = _chart_words(sys, chart, order)
        if sys.family == "horseshoe":
            if not phi.is_constant():
                raise DynamicsError("horseshoe weights need a constant potential")
            sn = np.full(len(words),
                         order * systems.evaluate_potential_word_constant(sys, phi))
        else:
            sn = _word_birkhoff(sys, phi, past, words, order)
        weights = np.exp(sn - order * p_hat)
        return LeafMeasure(chart=chart, kind="cylinders", order=order,
                           weights=weights, pressure=p_hat,
                           pressure_source=source, potential=phi, r=r,
                           words=words, meta={"representative": "lex_least"})

    if not 0 < r < chart.tau / 3.0:
        raise ValueError(f"need 0 < r < tau/3 = {chart.tau / 3.0:.6g}, got r={r}")
    centers, h = _arc_centers(chart, order, r)
    if phi.is_constant():
        sn = np.full(len(centers),
                     order * systems.evaluate_potential_word_constant(sys, phi))
    else:
        reps = np.maximum(centers - h, -chart.tau)
        sn = systems.birkhoff_sum_coords(sys, phi, chart.arc_points(reps), order)
    weights = np.exp(sn - order * p_hat)
    return LeafMeasure(chart=chart, kind="atoms", order=order, weights=weights,
                       pressure=p_hat, pressure_source=source, potential=phi,
                       r=r, coords=centers,
                       meta={"representative": "left_endpoint"})


def transfer_gibbs_weights(sys: SystemDescriptor, phi: Potential, n: int):
    """Exact stationary Gibbs cylinder weights from the Perron eigendata.

    mu(C_n(w)) = v[B_0] e^{S_{n-s} phi(w)} rho^{-(n-s)} h[B_last] with s-block
    states B; the left/right normalization makes this a probability vector.
    """
    eig = pressure_mod.sft_exact_pressure(sys, phi)
    s = eig.block_length
    if n < s:
        raise ValueError(f"need n >= block length {s}")
    words = systems.admissible_words(sys, n)
    index = {blk: i for i, blk in enumerate(eig.states)}
    first = np.array([index[tuple(map(int, w[:s]))] for w in words])
    last = np.array([index[tuple(map(int, w[n - s:]))] for w in words])
    if n == s:
        sn = np.zeros(len(words))
    elif phi.is_constant():
        sn = np.full(len(words),
                     (n - s) * systems.evaluate_potential_word_constant(sys, phi))
    else:
        sn = systems.birkhoff_sum_words(sys, replace(phi, offset=0), words, n - s)
    mu = eig.left[first] * np.exp(sn) * eig.rho ** (-(n - s)) * eig.right[last]
    return words, mu


# ---------------------------------------------------------------------------
# mass window


@dataclass(frozen=True)
class MassBoundsReport:
    min_mass: float
    max_mass: float
    k_hat: float                 # masses all lie in [1/k_hat, k_hat]
    ratio_by_order: tuple        # (order, max/min across base points)
    window_growth: float         # mid-order -> top-order growth of the ratio
    passed: bool

    def to_dict(self) -> dict:
        return {"min_mass": self.min_mass, "max_mass": self.max_mass,
                "k_hat": self.k_hat,
                "ratio_by_order": [list(t) for t in self.ratio_by_order],
                "window_growth": self.window_growth, "passed": self.passed}


def mass_bounds_check(measures: Sequence[LeafMeasure]) -> MassBoundsReport:
    """Empirical K: the total-mass window across base points and orders."""
    bases = {repr(m.chart.base) for m in measures}
    orders = sorted({m.order for m in measures})
    if len(orders) < 2 or len(bases) < 2:
        raise ValueError("need measures at >= 2 orders and >= 2 base points")
    masses = np.array([m.total_mass for m in measures])
    ratio_by_order = []
    for n in orders:
        ms = [m.total_mass for m in measures if m.order == n]
        ratio_by_order.append((n, max(ms) / min(ms)))
    mid = ratio_by_order[len(ratio_by_order) // 2][1]
    top = ratio_by_order[-1][1]
    growth = top / mid - 1.0
    k_hat = max(masses.max(), 1.0 / masses.min())
    return MassBoundsReport(float(masses.min()), float(masses.max()),
                            float(k_hat), tuple(ratio_by_order),
                            float(growth), bool(growth < 0.10 + 1e-9))


# ---------------------------------------------------------------------------
# the map action
#
# pushforward is the plain image: cylinder cells drop their first symbol
# (weights of the vanished symbol aggregate), arc atoms scale by lam and
# leave the window.  scaling_check then compares the conformal integral
# int_{f^-1 A} e^{P - phi} dm against a freshly built measure on the image
# leaf; on word cells the image leaf covers a cylinder once per aggregated
# predecessor, so the fresh weights carry that multiplicity.


def pushforward(measure: LeafMeasure, steps: int = 1,
                image_tau: Optional[float] = None,
                max_truncation: float = 0.98) -> LeafMeasure:
    if steps < 1:
        raise ValueError("steps >= 1")
    m = measure
    for _ in range(steps):
        m = _push_once(m, image_tau, max_truncation)
    return m


def _push_once(measure: LeafMeasure, image_tau, max_truncation) -> LeafMeasure:
    if measure.order < 2:
        raise ValueError("pushforward needs order >= 2 to reindex cells")
    sys = measure.chart.sys
    if measure.kind == "cylinders":
        suffixes, inv = np.unique(measure.words[:, 1:], axis=0,
                                  return_inverse=True)
        weights = np.zeros(len(suffixes))
        np.add.at(weights, inv, measure.weights)
        mult = np.bincount(inv, minlength=len(suffixes))
        base = measure.chart.base
        if sys.is_shift() and base.symbols:
            base = systems.apply(sys, base)
        elif sys.family == "horseshoe":
            base = systems.apply(sys, base)
        chart = LeafChart(sys, base, measure.chart.tau, "tree")
        meta = dict(measure.meta)
        meta["predecessor_counts"] = mult.tolist()
        return LeafMeasure(chart=chart, kind="cylinders",
                           order=measure.order - 1, weights=weights,
                           pressure=measure.pressure,
                           pressure_source=measure.pressure_source,
                           potential=measure.potential, r=measure.r,
                           words=suffixes, meta=meta)

    lam = sys.expansion
    tau = measure.chart.tau if image_tau is None else float(image_tau)
    moved = lam * measure.coords
    keep = np.abs(moved) <= tau
    kept_mass = float(measure.weights[keep].sum())
    total = measure.total_mass
    if total > 0 and 1.0 - kept_mass / total > max_truncation:
        raise ValueError(
            f"chart image truncation beyond tolerance: kept "
            f"{kept_mass / total:.3g} of the mass on |t| <= {tau:g}")
    base = systems.apply(sys, measure.chart.base)
    chart = systems.leaf_chart(sys, base, tau=tau)
    meta = dict(measure.meta)
    meta["kept_fraction"] = kept_mass / total if total else 1.0
    return LeafMeasure(chart=chart, kind="atoms", order=measure.order - 1,
                       weights=measure.weights[keep].copy(),
                       pressure=measure.pressure,
                       pressure_source=measure.pressure_source,
                       potential=measure.potential, r=measure.r,
                       coords=moved[keep], meta=meta)


@dataclass(frozen=True)
class ScalingReport:
    max_defect: float            # max |ratio - 1| over compared cells
    bound: float                 # a-priori defect bound for this potential
    cells: int
    passed: bool

    def to_dict(self) -> dict:
        return {"max_defect": self.max_defect, "bound": self.bound,
                "cells": self.cells, "passed": self.passed}


def _phi_at_reps(sys, phi, past, words) -> np.ndarray:
    # phi at the lex-least representative = the first Birkhoff term
    return _word_birkhoff(sys, phi, past, words, 1)


def scaling_check(measure: LeafMeasure) -> ScalingReport:
    """Conformality defect of one map step, cell by cell.

    Compares int_{f^-1 A} e^{P - phi} dm over each image cell A against the
    order-(n-1) measure built natively on the image leaf.
    """
    sys = measure.chart.sys
    phi, p_hat, n = measure.potential, measure.pressure, measure.order
    if n < 2:
        raise ValueError("scaling check needs order >= 2")

    if measure.kind == "cylinders":
        if phi.kind == "locally_constant" and phi.offset != 0:
            raise DynamicsError("scaling check needs an offset-0 reading frame")
        density = np.exp(p_hat - _phi_at_reps(sys, phi, (), measure.words))
        suffixes, inv = np.unique(measure.words[:, 1:], axis=0,
                                  return_inverse=True)
        conf = np.zeros(len(suffixes))
        np.add.at(conf, inv, density * measure.weights)
        mult = np.bincount(inv, minlength=len(suffixes))
        sn = _word_birkhoff(sys, phi, (), suffixes, n - 1)
        native = mult * np.exp(sn - (n - 1) * p_hat)
        ratios = conf / native
        defect = float(np.abs(ratios - 1.0).max())
        bound = 1e-12
        return ScalingReport(defect, bound, len(suffixes),
                             bool(defect <= bound + 1e-12))

    pushed = _push_once(measure, None, 1.0)
    density = np.exp(p_hat - _atom_phi(sys, phi, measure))
    conf = density[np.abs(sys.expansion * measure.coords)
                   <= measure.chart.tau] * pushed.weights
    native = build_reference_measure(sys, phi, pushed.chart, measure.r,
                                     n - 1, pressure=p_hat)
    idx, ok = _match_atoms(pushed.coords, native)
    ratios = conf[ok] / native.weights[idx[ok]]
    defect = float(np.abs(ratios - 1.0).max())
    bound = _atom_scaling_bound(phi, native)
    return ScalingReport(defect, bound, int(ok.sum()),
                         bool(defect <= bound + 1e-12))


def _atom_phi(sys, phi, measure) -> np.ndarray:
    if phi.is_constant():
        return np.full(len(measure.coords),
                       systems.evaluate_potential_word_constant(sys, phi))
    h = measure.cell_radius()
    reps = np.maximum(measure.coords - h, -measure.chart.tau)
    return systems.birkhoff_sum_coords(sys, phi, measure.chart.arc_points(reps), 1)


def _match_atoms(ts: np.ndarray, native: LeafMeasure):
    """Nearest native cell for each atom parameter; ok flags real matches."""
    h = native.cell_radius()
    start = native.coords[0]
    idx = np.rint((ts - start) / (2 * h)).astype(np.int64)
    ok = (idx >= 0) & (idx < len(native.coords))
    ok &= np.abs(ts - native.coords[np.clip(idx, 0, len(native.coords) - 1)]) \
        <= h * (1 + 1e-9)
    return idx, ok


def _atom_scaling_bound(phi: Potential, native: LeafMeasure) -> float:
    if phi.is_constant():
        return 1e-12
    # representative offset and grid mismatch both live inside one image
    # cell, so the defect is controlled by the potential's modulus there,
    # accumulated along the n-1 remaining Birkhoff terms (geometric decay)
    h = native.cell_radius()
    lam = native.chart.sys.expansion
    var = phi.holder_norm * (4 * h) ** phi.holder_beta
    return math.expm1(2 * var / (1 - lam ** -phi.holder_beta))


def iterated_scaling_check(measure: LeafMeasure, steps: int) -> ScalingReport:
    """Accumulated conformality defect of an n-fold pushforward."""
    if not 1 <= steps < measure.order:
        raise ValueError("need 1 <= steps < order")
    worst, cells, bound = 0.0, 0, 0.0
    m = measure
    for _ in range(steps):
        rep = scaling_check(m)
        worst = max(worst, rep.max_defect)
        cells = max(cells, rep.cells)
        bound = max(bound, rep.bound)
        m = _push_once(m, None, 1.0)
    return ScalingReport(worst * steps, bound * steps, cells,
                         bool(worst <= bound + 1e-12))


# ---------------------------------------------------------------------------
# u-Gibbs ratios


@dataclass(frozen=True)
class GibbsRatioReport:
    max_ratio: float
    min_ratio: float
    q1: float                    # max(max_ratio, 1/min_ratio)
    spread_by_n: tuple           # (n, max/min ratio at that ball order)
    window_growth: float
    passed: bool

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "min_ratio": self.min_ratio,
                "q1": self.q1,
                "spread_by_n": [list(t) for t in self.spread_by_n],
                "window_growth": self.window_growth, "passed": self.passed}


def u_gibbs_check(measure: LeafMeasure, samples: int = 16,
                  n_range: Optional[Sequence[int]] = None,
                  seed: int = 0) -> GibbsRatioReport:
    """mu(B_n^u(x, r)) / e^{-n P + S_n phi(x)} over sampled x and ball orders."""
    N = measure.order
    ns = sorted(set(int(n) for n in (n_range or range(max(1, N // 2), N + 1))))
    if ns[-1] > N or ns[0] < 1:
        raise ValueError(f"ball orders must lie in [1, {N}]")
    rng = np.random.default_rng(seed)
    cells = len(measure.weights)
    picks = np.sort(rng.choice(cells, size=min(samples, cells), replace=False))

    sys, phi, p_hat = measure.chart.sys, measure.potential, measure.pressure
    ratios_by_n = []
    if measure.kind == "cylinders":
        past = measure.chart.past_symbols() if sys.is_shift() else ()
        sel = measure.words[picks]
        sn_full = np.stack([_word_birkhoff(sys, phi, past, sel, n)
                            for n in ns], axis=1)
        for j, n in enumerate(ns):
            rs = []
            for i, w in enumerate(sel):
                inball = (measure.words[:, :n] == w[:n]).all(axis=1)
                mass = float(measure.weights[inball].sum())
                rs.append(mass / math.exp(-n * p_hat + sn_full[i, j]))
            ratios_by_n.append(np.array(rs))
    else:
        centers = measure.coords[picks]
        for n in ns:
            h = measure.chart.cell_radius(n, measure.r)
            if phi.is_constant():
                sn = np.full(len(centers),
                             n * systems.evaluate_potential_word_constant(sys, phi))
            else:
                sn = systems.birkhoff_sum_coords(
                    sys, phi, measure.chart.arc_points(centers), n)
            rs = []
            for i, t in enumerate(centers):
                mass = float(measure.weights[np.abs(measure.coords - t) <= h].sum())
                rs.append(mass / math.exp(-n * p_hat + sn[i]))
            ratios_by_n.append(np.array(rs))

    allr = np.concatenate(ratios_by_n)
    spread_by_n = tuple((n, float(rs.max() / rs.min()))
                        for n, rs in zip(ns, ratios_by_n))
    mid = spread_by_n[len(spread_by_n) // 2][1]
    growth = spread_by_n[-1][1] / mid - 1.0
    q1 = max(float(allr.max()), 1.0 / float(allr.min()))
    return GibbsRatioReport(float(allr.max()), float(allr.min()), q1,
                            spread_by_n, float(growth),
                            bool(growth < 0.10 + 1e-9))


# ---------------------------------------------------------------------------
# holonomy
#
# Sliding along stable leaves between two charted unstable leaves of one
# rectangle.  On word charts the slide keeps the future and swaps the past;
# on arc charts it is the bracket projection, an affine parameter shift for
# the linear torus map.


@dataclass(frozen=True)
class Holonomy:
    sys: SystemDescriptor
    source: LeafChart
    target: LeafChart
    shift: Optional[float]       # arc parameter offset; None on word charts
    rectangle: dict

    def to_dict(self) -> dict:
        return {"system": systems.descriptor_to_dict(self.sys),
                "shift": self.shift, "rectangle": self.rectangle}


def holonomy(sys: SystemDescriptor, source: LeafChart,
             target: LeafChart) -> Holonomy:
    if source.kind != target.kind:
        raise ValueError("holonomy needs charts of one kind")
    if source.kind == "tree":
        sp, tp = source.past_symbols(), target.past_symbols()
        if sys.family == "sft":
            A = np.asarray(sys.transition)
            sa = set(np.flatnonzero(A[sp[-1]])) if sp else set(range(sys.p))
            ta = set(np.flatnonzero(A[tp[-1]])) if tp else set(range(sys.p))
            if sa != ta:
                raise BracketError(
                    f"bracket failures inside the rectangle: pasts {sp} and "
                    f"{tp} admit different futures")
        rect = {"u_set": "admissible forward cylinders",
                "s_set": [list(sp), list(tp)]}
        return Holonomy(sys, source, target, None, rect)
    image = systems.smale_bracket(sys, source.base, target.base)
    if sys.family == "cat_map":
        delta = np.array([image.x - target.base.x, image.y - target.base.y])
        delta -= np.rint(delta)
        shift = float(delta @ systems.CAT_EU)
    else:
        shift = float(image.theta - target.base.theta)
    if abs(shift) + source.tau > target.tau + 1e-12:
        raise BracketError(
            f"rectangle slices not in bijection: shift {shift:.4g} pushes "
            f"the source window past the target chart")
    rect = {"u_set": [-source.tau, source.tau],
            "s_set": "stable segments between the two base leaves"}
    return Holonomy(sys, source, target, shift, rect)


def holonomy_apply(h: Holonomy, measure: LeafMeasure) -> LeafMeasure:
    """Transport a source-leaf measure to the target leaf, weights intact."""
    c, s = measure.chart, h.source
    if (repr(c.base), c.tau, c.kind) != (repr(s.base), s.tau, s.kind):
        raise ValueError("measure lives on a different chart than the holonomy")
    meta = dict(measure.meta)
    meta["transported"] = True
    if measure.kind == "cylinders":
        return replace(measure, chart=h.target, meta=meta)
    return replace(measure, chart=h.target, coords=measure.coords + h.shift,
                   meta=meta)


@dataclass(frozen=True)
class HolonomyReport:
    max_ratio: float
    min_ratio: float
    q2: float
    window: Optional[float]      # closed-form bound on the ratio, when known
    cells: int
    passed: bool

    def to_dict(self) -> dict:
        return {"max_ratio": self.max_ratio, "min_ratio": self.min_ratio,
                "q2": self.q2, "window": self.window, "cells": self.cells,
                "passed": self.passed}


def _ratio_window(phi: Potential) -> Optional[float]:
    if phi.is_constant():
        return 1.0
    if phi.kind != "locally_constant":
        return None
    if phi.offset == 0:
        return 1.0
    table = np.asarray(phi.table)
    m = -phi.offset
    if m == 1:
        # only the first Birkhoff term sees the swapped past; comparing
        # points that agree on coordinates >= 0 telescopes to var_1 / (1 - 1/2)
        p = round(len(table) ** (1.0 / phi.depth))
        grid = table.reshape((p,) * phi.depth)
        var1 = float((grid.max(axis=0) - grid.min(axis=0)).max())
        return math.exp(2.0 * var1)
    return math.exp(2.0 * m * float(table.max() - table.min()))


def holonomy_equivalence_check(h: Holonomy, m_y: LeafMeasure,
                               m_z: LeafMeasure) -> HolonomyReport:
    """Density of the transported measure against the native target measure."""
    if m_y.order != m_z.order or m_y.kind != m_z.kind:
        raise ValueError("measures must share order and representation")
    moved = holonomy_apply(h, m_y)
    if m_y.kind == "cylinders":
        if moved.words.shape != m_z.words.shape or \
                (moved.words != m_z.words).any():
            raise BracketError("bracket failures inside the rectangle: "
                               "cell families differ")
        ratios = moved.weights / m_z.weights
    else:
        idx, ok = _match_atoms(moved.coords, m_z)
        if not ok.any():
            raise BracketError("no transported cell lands in the target chart")
        ratios = moved.weights[ok] / m_z.weights[idx[ok]]
    window = _ratio_window(m_y.potential)
    mx, mn = float(ratios.max()), float(ratios.min())
    q2 = max(mx, 1.0 / mn)
    passed = q2 <= window * (1 + 1e-9) if window is not None else bool(np.isfinite(q2))
    return HolonomyReport(mx, mn, q2, window, len(ratios), passed)


# ---------------------------------------------------------------------------
# cross-check against the cover optimum


@dataclass(frozen=True)
class CoverAgreement:
    mass: float
    lower: float                 # cover-DP value shrunk by the rep slack
    upper: float
    slack: float                 # log-scale representative freedom
    passed: bool

    def to_dict(self) -> dict:
        return {"mass": self.mass, "lower": self.lower, "upper": self.upper,
                "slack": self.slack, "passed": self.passed}


def cover_consistency_check(measure: LeafMeasure) -> CoverAgreement:
    """Total mass against the exact single-order cover value at alpha = P.

    The order-n cover with per-cylinder minimal weights is the measure's own
    cell family, so the mass exceeds that value by at most the representative
    freedom in the last depth-1 window terms: V <= mass <= V e^slack.
    """
    sys = measure.chart.sys
    if not sys.is_shift():
        raise ValueError("the exact cover cross-check is symbolic")
    phi = measure.potential
    if phi.kind == "locally_constant" and phi.offset != 0:
        raise ValueError("cover cross-check needs an offset-0 reading frame")
    struct = caratheodory.leaf_structure(sys, phi, 0.7)
    est = caratheodory.outer_measure(struct, caratheodory.target_all(),
                                     measure.pressure, measure.order, window=0)
    if phi.kind == "locally_constant" and phi.depth > 1:
        table = np.asarray(phi.table)
        slack = (phi.depth - 1) * float(table.max() - table.min())
    else:
        slack = 0.0
    lo = est.lower - 1e-9
    hi = est.upper * math.exp(slack) + 1e-9
    mass = measure.total_mass
    return CoverAgreement(mass, lo, hi, slack, bool(lo <= mass <= hi))
