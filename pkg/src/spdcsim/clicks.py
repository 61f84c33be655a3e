"""On/off detection probabilities of Gaussian states.

Every outcome probability is reduced to signed vacuum overlaps

    Tr[rho |0><0|^{(x) m}] = 2^m / sqrt(det(cov_S + I)) * exp(-d_S^T (cov_S + I)^{-1} d_S)

over subsets S of the clicking detectors (inclusion-exclusion on
``Pi_on = I - (1 - nu)|0><0|``). For many inefficient detectors the signed
terms are O(1) while the probability can be 1e-40 or smaller, so the sum is
evaluated in double precision first and re-evaluated with multiple precision
(gmpy2) whenever the rounding bound is not small against the result.
"""
from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import gmpy2
import numpy as np

from .errors import InvalidArgument, NumericalDegeneracy
from .gaussian import GaussianState, Mode, apply_loss, quadrature_indices

PROB_TOL = 1e-9
DEFAULT_RTOL = 1e-11  # 10x inside the tightest relative check we make (1e-10)
MAX_PRECISION_BITS = 4096
VACUUM_TOL = 16 * np.finfo(float).eps


class Outcome(enum.Enum):
    CLICK = "click"
    NOCLICK = "noclick"
    MARGINAL = "marginal"

    @classmethod
    def coerce(cls, value) -> "Outcome":
        if isinstance(value, cls):
            return value
        if isinstance(value, bool):
            return cls.CLICK if value else cls.NOCLICK
        try:
            return cls(str(value).lower().replace("-", "").replace("_", ""))
        except ValueError:
            raise InvalidArgument(f"unknown outcome {value!r}") from None


@dataclass(frozen=True)
class DetectorSpec:
    """An on/off detector covering one or more modes.

    ``efficiency`` is applied as a loss channel on every covered mode before
    detection; ``dark_rate`` scales the no-click operator by ``1 - dark_rate``.
    """

    id: str
    modes: tuple
    efficiency: float = 1.0
    dark_rate: float = 0.0

    def __post_init__(self):
        modes = (self.modes,) if isinstance(self.modes, (str, int)) else tuple(self.modes)
        if not modes:
            raise InvalidArgument(f"detector {self.id!r} covers no modes")
        if len(set(modes)) != len(modes):
            raise InvalidArgument(f"detector {self.id!r} lists a mode twice")
        if not 0.0 <= float(self.efficiency) <= 1.0:
            raise InvalidArgument(f"detector {self.id!r}: efficiency must be in [0, 1]")
        if not 0.0 <= float(self.dark_rate) < 1.0:
            raise InvalidArgument(f"detector {self.id!r}: dark rate must be in [0, 1)")
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "modes", modes)


ClickPattern = Mapping[str, Outcome]


@dataclass
class Evaluation:
    """Result of an inclusion-exclusion evaluation with its bookkeeping."""

    probability: float
    n_terms: int
    precision_bits: int
    error_bound: float


def _check_prob(p: float, what: str = "probability") -> float:
    if -PROB_TOL <= p < 0.0:
        return 0.0
    if 1.0 < p <= 1.0 + PROB_TOL:
        return 1.0
    if not (0.0 <= p <= 1.0):
        raise NumericalDegeneracy(f"{what} {p!r} outside [0, 1]")
    return p


def _cholesky_logdet(a: np.ndarray) -> np.ndarray:
    """log det of a (batched) SPD matrix; raises if not positive definite."""
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracy("cov + I is not positive definite") from exc
    diag = np.diagonal(chol, axis1=-2, axis2=-1)
    return 2.0 * np.log(diag).sum(axis=-1)


def _overlaps_double(cov: np.ndarray, disp: np.ndarray, index_sets: Sequence[np.ndarray]) -> np.ndarray:
    """Vacuum overlaps for many quadrature index sets, batched by set size."""
    out = np.empty(len(index_sets))
    by_size: dict[int, list[int]] = {}
    for k, q in enumerate(index_sets):
        by_size.setdefault(len(q), []).append(k)
    has_disp = bool(np.any(disp))
    for size, ks in by_size.items():
        if size == 0:
            out[ks] = 1.0
            continue
        q = np.array([index_sets[k] for k in ks])
        a = cov[q[:, :, None], q[:, None, :]] + np.eye(size)
        logdet = _cholesky_logdet(a)
        m = size // 2
        log_f = m * math.log(2.0) - 0.5 * logdet
        if has_disp:
            d = disp[q]
            sol = np.linalg.solve(a, d[..., None])[..., 0]
            log_f = log_f - np.einsum("ki,ki->k", d, sol)
        out[ks] = np.exp(log_f)
    return out


class _Problem:
    """Detector layout folded onto a state: base (no-click) set plus click groups."""

    def __init__(self, state: GaussianState, detectors: Sequence[DetectorSpec], pattern: ClickPattern):
        dets = {d.id: d for d in detectors}
        if len(dets) != len(detectors):
            raise InvalidArgument("duplicate detector ids")
        pattern = {str(k): Outcome.coerce(v) for k, v in pattern.items()}
        for det_id in pattern:
            if det_id not in dets:
                raise InvalidArgument(f"pattern references unknown detector {det_id!r}")
        seen: dict[int, str] = {}
        for d in detectors:
            for idx in state.indices(d.modes):
                if idx in seen:
                    raise InvalidArgument(
                        f"detectors {seen[idx]!r} and {d.id!r} overlap on mode {state.mode_labels[idx]!r}"
                    )
                seen[idx] = d.id
        active = sorted(
            (d for d in detectors if pattern.get(d.id, Outcome.MARGINAL) is not Outcome.MARGINAL),
            key=lambda d: d.id,
        )
        self.clicks = [d for d in active if pattern[d.id] is Outcome.CLICK]
        self.noclicks = [d for d in active if pattern[d.id] is Outcome.NOCLICK]

        # restrict to measured modes: base modes first, then click groups
        base_modes = [i for d in self.noclicks for i in state.indices(d.modes)]
        group_modes = [state.indices(d.modes) for d in self.clicks]
        order = base_modes + [i for g in group_modes for i in g]
        n = state.n_modes
        q = quadrature_indices(n, order) if order else np.array([], dtype=int)
        m = len(order)
        # detector efficiency is a loss channel on the measured modes only
        eff = [d.efficiency for d in self.noclicks for _ in d.modes]
        eff += [d.efficiency for d in self.clicks for _ in d.modes]
        k = np.sqrt(np.array(eff + eff, dtype=float))
        cov = state.cov[q[:, None], q] if order else np.zeros((0, 0))
        self.cov = k[:, None] * cov * k[None, :] + np.diag(1.0 - k**2)
        self.disp = k * state.disp[q] if order else np.zeros(0)
        # local mode positions
        self.base_local = list(range(len(base_modes)))
        self.groups_local = []
        pos = len(base_modes)
        for g in group_modes:
            self.groups_local.append(list(range(pos, pos + len(g))))
            pos += len(g)
        self.n_local = m
        self.base_factor = math.prod(1.0 - d.dark_rate for d in self.noclicks)
        self.click_factors = [1.0 - d.dark_rate for d in self.clicks]
        self.click_darks = [d.dark_rate for d in self.clicks]

    @property
    def n_terms(self) -> int:
        return 2 ** len(self.clicks)

    def modes_for_mask(self, mask: int) -> list[int]:
        modes = list(self.base_local)
        for j, g in enumerate(self.groups_local):
            if mask >> j & 1:
                modes.extend(g)
        return modes

    def coefficient(self, mask: int) -> float:
        c = self.base_factor
        for j, f in enumerate(self.click_factors):
            if mask >> j & 1:
                c *= -f
        return c

    def is_vacuum(self) -> bool:
        # rounding from passive optics on vacuum leaves ~1e-16 off the identity
        return bool(
            np.all(np.abs(self.cov - np.eye(len(self.cov))) <= VACUUM_TOL)
            and np.all(np.abs(self.disp) <= VACUUM_TOL)
        )

    def x_p_decoupled(self) -> bool:
        m = self.n_local
        return not np.any(self.cov[:m, m:])


def _quads(modes: Sequence[int], m: int) -> np.ndarray:
    modes = np.asarray(modes, dtype=int)
    return np.concatenate([modes, modes + m])


def inclusion_exclusion_terms(state, detectors, pattern) -> list[tuple[tuple[str, ...], float, float]]:
    """All signed terms as ``(click-detector ids in S, coefficient, vacuum overlap)``.

    The probability is the sum of ``coefficient * overlap``; masks run in
    lexicographic (increasing bitmask) order over detector-id-sorted clicks.
    """
    prob = _Problem(state, detectors, pattern)
    masks = range(prob.n_terms)
    sets = [_quads(prob.modes_for_mask(mk), prob.n_local) for mk in masks]
    overlaps = _overlaps_double(prob.cov, prob.disp, sets)
    return [
        (
            tuple(d.id for j, d in enumerate(prob.clicks) if mk >> j & 1),
            prob.coefficient(mk),
            float(overlaps[mk]),
        )
        for mk in masks
    ]


# -- multiple-precision evaluator -------------------------------------------------


def _ldl_tree(a_rows, d_vec, base: list[int], groups: list[list[int]]) -> tuple[list, list]:
    """det(A_S) and d_S^T A_S^{-1} d_S for every S = base + chosen groups.

    Depth-first over groups in order, extending an LDL^T factorization one
    index at a time so a child reuses its parent's factor. Returns lists
    indexed by bitmask over ``groups``.
    """
    n_groups = len(groups)
    dets = [None] * (1 << n_groups)
    quads = [None] * (1 << n_groups)
    has_disp = any(d_vec)

    # factor rows: list of (index, W row = L[j][r] * D[r] list, L row list, D_j, y_j)
    def extend(rows, det, quad, idx):
        rows = list(rows)
        for j in idx:
            arow = a_rows[j]
            lrow = []
            wrow = []
            for r, (ri, wr, lr, dr, yr) in enumerate(rows):
                u = arow[ri]
                for q in range(r):
                    u -= lrow[q] * wr[q]
                lv = u / dr
                lrow.append(lv)
                wrow.append(u)
            dj = arow[j]
            for q in range(len(rows)):
                dj -= lrow[q] * wrow[q]
            if not dj > 0:
                raise NumericalDegeneracy("cov + I is not positive definite")
            yj = d_vec[j]
            if has_disp:
                for q, row in enumerate(rows):
                    yj -= lrow[q] * row[4]
                quad = quad + yj * yj / dj
            det = det * dj
            rows.append((j, wrow, lrow, dj, yj))
        return rows, det, quad

    root_rows, root_det, root_quad = extend([], gmpy2.mpfr(1), gmpy2.mpfr(0), base)

    stack = [(0, 0, root_rows, root_det, root_quad)]  # (next group, mask, rows, det, quad)
    while stack:
        start, mask, rows, det, quad = stack.pop()
        dets[mask] = det
        quads[mask] = quad
        for g in range(n_groups - 1, start - 1, -1):
            child_rows, child_det, child_quad = extend(rows, det, quad, groups[g])
            stack.append((g + 1, mask | (1 << g), child_rows, child_det, child_quad))
    return dets, quads


def _evaluate_mp(prob: _Problem, bits: int) -> tuple[float, float]:
    ctx = gmpy2.get_context().copy()
    ctx.precision = bits
    with gmpy2.context(ctx):
        m = prob.n_local
        a = prob.cov + np.eye(len(prob.cov))
        # zero + float is an exact conversion (bits >= 53) and much cheaper than mpfr(float)
        zero = gmpy2.mpfr(0)
        a_rows = [[zero + v for v in row] for row in a.tolist()]
        d_vec = [zero + v for v in prob.disp.tolist()]
        if prob.x_p_decoupled():
            blocks = [
                (list(prob.base_local), [list(g) for g in prob.groups_local]),
                ([i + m for i in prob.base_local], [[i + m for i in g] for g in prob.groups_local]),
            ]
        else:
            blocks = [
                (list(_quads(prob.base_local, m)), [list(_quads(g, m)) for g in prob.groups_local])
            ]
        results = [_ldl_tree(a_rows, d_vec, base, groups) for base, groups in blocks]
        total = zero
        abs_total = zero
        two = zero + 2
        for mask in range(prob.n_terms):
            det = zero + 1
            quad = zero
            for dets, quads in results:
                det *= dets[mask]
                quad += quads[mask]
            n_modes = len(prob.modes_for_mask(mask))
            overlap = two**n_modes / gmpy2.sqrt(det)
            if quad:
                overlap *= gmpy2.exp(-quad)
            coef = zero + prob.base_factor
            for j, f in enumerate(prob.click_factors):
                if mask >> j & 1:
                    coef *= -f
            term = coef * overlap
            total += term
            abs_total += abs(term)
        err = float(abs_total) * (8 * max(len(prob.cov), 1)) * 2.0 ** (-bits)
        return float(total), err


def _evaluate_double(prob: _Problem) -> tuple[float, float]:
    masks = range(prob.n_terms)
    sets = [_quads(prob.modes_for_mask(mk), prob.n_local) for mk in masks]
    overlaps = _overlaps_double(prob.cov, prob.disp, sets)
    terms = [prob.coefficient(mk) * overlaps[mk] for mk in masks]
    total = math.fsum(terms)
    err = math.fsum(abs(t) for t in terms) * (8 * max(len(prob.cov), 1)) * 2.0**-53
    return total, err


def _independent_estimate(prob: _Problem) -> float:
    """Pattern probability as if detectors clicked independently.

    Only used to pick a starting precision; 0 when a marginal underflows.
    """
    m = prob.n_local
    base = _quads(prob.base_local, m)
    sets = [base] + [np.concatenate([base, _quads(g, m)]) for g in prob.groups_local]
    ov = _overlaps_double(prob.cov, prob.disp, sets)
    est = prob.base_factor * ov[0]
    for f, o in zip(prob.click_factors, ov[1:]):
        est *= max(0.0, ov[0] - f * o)
    return est / ov[0] ** len(prob.groups_local) if ov[0] > 0 else 0.0


def _trivial(prob: _Problem) -> float | None:
    """Closed form when the measured modes are exactly vacuum."""
    if prob.n_local and not prob.is_vacuum():
        return None
    return prob.base_factor * math.prod(prob.click_darks)


def evaluate_pattern(
    state: GaussianState,
    detectors: Sequence[DetectorSpec],
    pattern: ClickPattern,
    precision="auto",
    rtol: float = DEFAULT_RTOL,
) -> Evaluation:
    """Inclusion-exclusion evaluation with bookkeeping.

    ``precision`` is ``"auto"`` (double, escalating to multiple precision
    until the rounding bound is below ``rtol * |P|``), ``"double"``, or an
    integer number of mantissa bits.
    """
    prob = _Problem(state, detectors, pattern)
    trivial = _trivial(prob)
    if trivial is not None:
        return Evaluation(_check_prob(trivial), prob.n_terms, 53, 0.0)
    if precision == "double":
        p, err = _evaluate_double(prob)
        bits = 53
    elif precision == "auto":
        p, err = _evaluate_double(prob)
        bits = 53
        first = True
        while err > rtol * abs(p) and bits < MAX_PRECISION_BITS:
            target = abs(p)
            if first and target <= 1e3 * err:
                # double result is noise; aim at a cheap estimate instead
                target = _independent_estimate(prob)
            if target > 0:
                needed = bits + math.log2(err / (rtol * target)) + 16
            else:
                needed = 2 * bits
            floor = 64 if first else bits + 64
            bits = min(MAX_PRECISION_BITS, max(int(math.ceil(needed)), floor))
            first = False
            p, err = _evaluate_mp(prob, bits)
    else:
        bits = int(precision)
        p, err = _evaluate_mp(prob, bits)
    return Evaluation(_check_prob(p), prob.n_terms, bits, err)


def pattern_probability(state, detectors, pattern, precision="auto") -> float:
    """Probability of a click/no-click/marginal pattern on ``detectors``."""
    return evaluate_pattern(state, detectors, pattern, precision).probability


def prob_no_click_all(state: GaussianState, modes: Iterable[Mode]) -> float:
    """Probability that every mode in ``modes`` is in vacuum."""
    modes = list(modes)
    idx = state.indices(modes)
    q = quadrature_indices(state.n_modes, idx)
    f = _overlaps_double(state.cov, state.disp, [q])[0]
    return _check_prob(float(f), "vacuum overlap")


def prob_on(state: GaussianState, mode: Mode) -> float:
    """Click probability of an ideal detector on a single mode."""
    return _check_prob(1.0 - prob_no_click_all(state, [mode]))


def pattern_probability_bruteforce_subsets(state, detectors, pattern) -> float:
    """Reference evaluator: expands each Pi_on independently, one determinant per term.

    No factor sharing, no batching, no escalation; double precision only.
    """
    dets = {d.id: d for d in detectors}
    pattern = {str(k): Outcome.coerce(v) for k, v in pattern.items()}
    for det_id in pattern:
        if det_id not in dets:
            raise InvalidArgument(f"pattern references unknown detector {det_id!r}")
    all_idx = [i for d in detectors for i in state.indices(d.modes)]
    if len(set(all_idx)) != len(all_idx):
        raise InvalidArgument("detectors overlap")
    for d in detectors:
        if pattern.get(d.id, Outcome.MARGINAL) is not Outcome.MARGINAL:
            state = apply_loss(state, d.efficiency, d.modes)
    # each measured detector contributes a list of (weight, projects-on-vacuum?)
    factors = []
    for d in detectors:
        outcome = pattern.get(d.id, Outcome.MARGINAL)
        if outcome is Outcome.CLICK:
            factors.append([(1.0, None), (-(1.0 - d.dark_rate), d)])
        elif outcome is Outcome.NOCLICK:
            factors.append([(1.0 - d.dark_rate, d)])
    total = []
    for choice in _product(factors):
        weight = 1.0
        modes = []
        for w, d in choice:
            weight *= w
            if d is not None:
                modes.extend(state.indices(d.modes))
        if modes:
            q = quadrature_indices(state.n_modes, modes)
            a = state.cov[q[:, None], q] + np.eye(len(q))
            sign, logdet = np.linalg.slogdet(a)
            if sign <= 0:
                raise NumericalDegeneracy("cov + I is not positive definite")
            d = state.disp[q]
            expo = -float(d @ np.linalg.solve(a, d)) if np.any(d) else 0.0
            overlap = 2.0 ** len(modes) * math.exp(-0.5 * logdet + expo)
        else:
            overlap = 1.0
        total.append(weight * overlap)
    return _check_prob(math.fsum(total))


def _product(factors):
    if not factors:
        yield ()
        return
    head, *rest = factors
    for tail in _product(rest):
        for item in head:
            yield (item,) + tail


def all_patterns(detector_ids: Sequence[str]):
    """Every click/no-click assignment over ``detector_ids``."""
    for bits in range(2 ** len(detector_ids)):
        yield {
            det_id: Outcome.CLICK if bits >> k & 1 else Outcome.NOCLICK
            for k, det_id in enumerate(detector_ids)
        }


def deterministic_mode() -> bool:
    return os.environ.get("DETERMINISTIC", "0") not in ("", "0", "false", "False")
