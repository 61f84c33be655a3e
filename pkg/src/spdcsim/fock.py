"""Brute-force photon-number-basis simulator used as an oracle.

Amplitudes live in a dense tensor with one axis per mode. Sources are
truncated at ``n_max`` photons; linear optics never truncates, because each
beam-splitter output axis is widened to hold every photon that can arrive
(``dim_a + dim_b - 1``). The only approximation is therefore the source
tail, whose mass is ``lambda^(2 (n_max + 1))`` per two-mode squeezer.

Loss is either applied to a density tensor with Kraus operators or, to keep
memory down on larger circuits, dilated into an explicit environment mode
that is never measured. Detector efficiency and dark counts enter as
diagonal weights in the photon-number basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clicks import DetectorSpec, Outcome
from .errors import InvalidArgument


@dataclass(frozen=True)
class FockVector:
    """Pure state: ``amplitudes[n_1, ..., n_k]`` over modes ``labels``."""

    amplitudes: np.ndarray
    labels: tuple[str, ...]
    # modes added to purify a loss; summed over, never measured
    environment: frozenset = frozenset()

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.amplitudes.shape

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidArgument(f"unknown mode {label!r}") from None

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def number_distribution(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density(self) -> "FockDensity":
        rho = np.multiply.outer(self.amplitudes, self.amplitudes.conj())
        dens = FockDensity(rho, self.labels)
        env = [lab for lab in self.labels if lab in self.environment]
        return dens.trace_out(env) if env else dens


@dataclass(frozen=True)
class FockDensity:
    """Mixed state: tensor with ket axes for every mode followed by bra axes."""

    matrix: np.ndarray
    labels: tuple[str, ...]

    @property
    def n_modes(self) -> int:
        return len(self.labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.matrix.shape[: self.n_modes]

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidArgument(f"unknown mode {label!r}") from None

    def flat(self) -> np.ndarray:
        d = int(np.prod(self.dims))
        return self.matrix.reshape(d, d)

    def trace(self) -> float:
        return float(np.trace(self.flat()).real)

    def number_distribution(self) -> np.ndarray:
        d = self.dims
        return np.real(np.diagonal(self.flat())).reshape(d)

    def trace_out(self, labels: Sequence[str]) -> "FockDensity":
        rho = self.matrix
        keep = list(self.labels)
        for lab in labels:
            k = keep.index(lab)
            rho = np.trace(rho, axis1=k, axis2=k + len(keep))
            keep.pop(k)
        return FockDensity(rho, tuple(keep))


FockState = FockVector | FockDensity
ROUNDING_SLACK = 1e-14


def fock_vacuum(labels: Sequence[str]) -> FockVector:
    labels = tuple(str(lab) for lab in labels)
    amp = np.ones((1,) * len(labels), dtype=complex)
    return FockVector(amp, labels)


def fock_tmsv(lam: float, n_max: int, labels=("0", "1"), sign="+") -> FockVector:
    """sqrt(1 - lam^2) sum_{n <= n_max} (+-lam)^n |n, n>."""
    if not 0.0 <= lam < 1.0:
        raise InvalidArgument(f"lambda must be in [0, 1), got {lam}")
    if n_max < 0:
        raise InvalidArgument("n_max must be >= 0")
    s = 1.0 if sign in ("+", 1) else -1.0
    amp = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    n = np.arange(n_max + 1)
    amp[n, n] = math.sqrt(1.0 - lam**2) * (s * lam) ** n
    return FockVector(amp, tuple(str(lab) for lab in labels))


def fock_tensor(*states: FockVector) -> FockVector:
    amp = states[0].amplitudes
    labels = list(states[0].labels)
    env = set(states[0].environment)
    for s in states[1:]:
        amp = np.multiply.outer(amp, s.amplitudes)
        labels.extend(s.labels)
        env |= s.environment
    if len(set(labels)) != len(labels):
        raise InvalidArgument(f"duplicate labels {labels}")
    return FockVector(amp, tuple(labels), frozenset(env))


def two_mode_unitary(block: np.ndarray, dim_a: int, dim_b: int, out_a: int, out_b: int) -> np.ndarray:
    """Matrix elements <k, l| U |i, j> of a passive two-mode transform.

    Creation operators map as ``a^dag -> block[0,0] a^dag + block[0,1] b^dag``
    and ``b^dag -> block[1,0] a^dag + block[1,1] b^dag``, which moves
    coherent amplitudes exactly as ``d -> S^T d`` does on the Gaussian side.
    Output photon numbers beyond ``out_a - 1`` / ``out_b - 1`` are dropped.
    """
    u = np.zeros((out_a, out_b, dim_a, dim_b))
    fact = [math.factorial(k) for k in range(dim_a + dim_b)]
    for i in range(dim_a):
        pa = _binomial_poly(block[0, 0], block[0, 1], i)
        for j in range(dim_b):
            pb = _binomial_poly(block[1, 0], block[1, 1], j)
            poly = np.convolve(pa, pb)  # poly[k] = coefficient of a^dag^(N-k) b^dag^k
            total = i + j
            norm = 1.0 / math.sqrt(fact[i] * fact[j])
            for k, c in enumerate(poly):
                na, nb = total - k, k
                if na < out_a and nb < out_b and c != 0.0:
                    u[na, nb, i, j] = c * norm * math.sqrt(fact[na] * fact[nb])
    return u


def _binomial_poly(x: float, y: float, n: int) -> np.ndarray:
    """Coefficients of (x a + y b)^n by power of b."""
    k = np.arange(n + 1)
    binom = np.array([math.comb(n, int(j)) for j in k], dtype=float)
    return binom * x ** (n - k) * y**k


def _apply_two_mode(state: FockState, block: np.ndarray, a: str, b: str, cap: int | None) -> FockState:
    ia, ib = state.axis(a), state.axis(b)
    if ia == ib:
        raise InvalidArgument("two-mode operation needs distinct modes")
    da, db = state.dims[ia], state.dims[ib]
    out = da + db - 1
    if cap is not None:
        out = min(out, cap + 1)
    u = two_mode_unitary(block, da, db, out, out)
    if isinstance(state, FockVector):
        amp = _contract_pair(state.amplitudes, u, ia, ib)
        return FockVector(amp, state.labels, state.environment)
    n = state.n_modes
    rho = _contract_pair(state.matrix, u, ia, ib)
    rho = _contract_pair(rho, u.conj(), ia + n, ib + n)
    return FockDensity(rho, state.labels)


def _contract_pair(t: np.ndarray, u: np.ndarray, ia: int, ib: int) -> np.ndarray:
    moved = np.moveaxis(t, (ia, ib), (0, 1))
    res = np.tensordot(u, moved, axes=([2, 3], [0, 1]))
    return np.moveaxis(res, (0, 1), (ia, ib))


def fock_beam_splitter(state: FockState, t: float, a: str, b: str, cap: int | None = None) -> FockState:
    """Beam splitter with the same 2x2 block as the Gaussian-side matrix."""
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"transmittance must be in [0, 1], got {t}")
    st, r = math.sqrt(t), math.sqrt(1.0 - t)
    return _apply_two_mode(state, np.array([[st, r], [-r, st]]), a, b, cap)


def fock_polarizer(state: FockState, theta: float, h: str, v: str, cap: int | None = None) -> FockState:
    c, s = math.cos(theta), math.sin(theta)
    return _apply_two_mode(state, np.array([[c, s], [-s, c]]), h, v, cap)


def fock_swap(state: FockState, a: str, b: str) -> FockState:
    labels = list(state.labels)
    ia, ib = state.axis(a), state.axis(b)
    labels[ia], labels[ib] = labels[ib], labels[ia]
    if isinstance(state, FockVector):
        return FockVector(state.amplitudes, tuple(labels), state.environment)
    return FockDensity(state.matrix, tuple(labels))


def append_vacuum(state: FockState, labels: Sequence[str]) -> FockState:
    labels = tuple(str(lab) for lab in labels)
    if isinstance(state, FockVector):
        return FockVector(
            state.amplitudes.reshape(state.dims + (1,) * len(labels)),
            state.labels + labels,
            state.environment,
        )
    k = len(labels)
    mat = state.matrix.reshape(state.dims + (1,) * k + state.dims + (1,) * k)
    return FockDensity(mat, state.labels + labels)


def loss_kraus(t: float, dim: int) -> np.ndarray:
    """Kraus operators E_k[m, n] = sqrt(C(n, k) t^(n-k) (1-t)^k) delta(m, n-k)."""
    ops = np.zeros((dim, dim, dim))
    for k in range(dim):
        for n in range(k, dim):
            ops[k, n - k, n] = math.sqrt(math.comb(n, k) * t ** (n - k) * (1.0 - t) ** k)
    return ops


def fock_loss(state: FockState, t: float, mode: str, purify: bool = False) -> FockState:
    """Pure loss of transmittance ``t`` on ``mode``.

    Densities get the Kraus map. A vector becomes a density unless
    ``purify`` is set, in which case a fresh environment mode ``<mode>.env``
    takes the reflected light and is summed over at measurement time.
    """
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"transmittance must be in [0, 1], got {t}")
    if isinstance(state, FockVector):
        if purify:
            env, k = f"{mode}.env", 1
            while env in state.labels:
                k += 1
                env = f"{mode}.env{k}"
            wide = append_vacuum(state, [env])
            wide = FockVector(wide.amplitudes, wide.labels, state.environment | {env})
            dim = state.dims[state.axis(mode)]
            return fock_beam_splitter(wide, t, mode, env, cap=dim - 1)
        state = state.to_density()
    ia = state.axis(mode)
    n = state.n_modes
    kraus = loss_kraus(t, state.dims[ia])
    rho = state.matrix
    out = np.zeros_like(rho)
    for e in kraus:
        term = np.moveaxis(np.tensordot(e, np.moveaxis(rho, ia, 0), axes=(1, 0)), 0, ia)
        term = np.moveaxis(np.tensordot(e, np.moveaxis(term, ia + n, 0), axes=(1, 0)), 0, ia + n)
        out = out + term
    return FockDensity(out, state.labels)


def fock_mode_mismatch(state: FockState, xi: float, a: str, b: str) -> FockState:
    """Same virtual beam-splitter construction as the Gaussian side."""
    a2, b2, a3, b3 = f"{a}.2", f"{b}.2", f"{a}.3", f"{b}.3"
    state = append_vacuum(state, [a2, b2, a3, b3])
    state = fock_beam_splitter(state, xi, a, a2)
    return fock_beam_splitter(state, xi, b, b3)


def _measured_distribution(state: FockState, modes: Sequence[str]) -> np.ndarray:
    """Joint photon-number distribution of ``modes``; every other mode is summed."""
    p = state.number_distribution()
    axes = [state.axis(m) for m in modes]
    other = tuple(k for k in range(state.n_modes) if k not in axes)
    p = p.sum(axis=other) if other else p
    remaining = sorted(axes)
    return np.moveaxis(p, [remaining.index(ax) for ax in axes], list(range(len(axes))))


def fock_pattern_probability(
    state: FockState, detectors: Sequence[DetectorSpec], pattern, mode_efficiency=None
) -> float:
    """sum_n p(n) prod_detectors w(n), with w the on/off POVM element after efficiency.

    No-click weight of a detector: (1 - nu) prod_i (1 - eta eta_i)^{n_i}, where
    ``eta_i`` is an optional extra transmittance of mode i taken from
    ``mode_efficiency`` (loss right before detection); click weight: one minus
    that. Marginal detectors weigh 1.
    """
    mode_efficiency = dict(mode_efficiency or {})
    pattern = {str(k): Outcome.coerce(v) for k, v in pattern.items()}
    active = [d for d in detectors if pattern.get(d.id, Outcome.MARGINAL) is not Outcome.MARGINAL]
    for det_id in pattern:
        if det_id not in {d.id for d in detectors}:
            raise InvalidArgument(f"pattern references unknown detector {det_id!r}")
    modes = [str(m) for d in active for m in d.modes]
    if len(set(modes)) != len(modes):
        raise InvalidArgument("detectors overlap")
    p = _measured_distribution(state, modes)
    weight = np.ones(p.shape)
    pos = 0
    for d in active:
        k = len(d.modes)
        off = np.full(p.shape[pos : pos + k], 1.0 - d.dark_rate)
        for j in range(k):
            n = np.arange(p.shape[pos + j])
            shape = [1] * k
            shape[j] = -1
            eff = d.efficiency * mode_efficiency.get(str(d.modes[j]), 1.0)
            off = off * ((1.0 - eff) ** n).reshape(shape)
        w = off if pattern[d.id] is Outcome.NOCLICK else 1.0 - off
        full_shape = [1] * p.ndim
        full_shape[pos : pos + k] = w.shape
        weight = weight * w.reshape(full_shape)
        pos += k
    return float((p * weight).sum())


def truncation_bound(lam2: float, n_max: int, n_sources: int, n_detectors: int = 1) -> float:
    """Upper bound on |exact - truncated| for any outcome probability.

    Each squeezer drops mass lam2^(n_max + 1); the detector-count factor is
    deliberately generous. A thermal mode clicking alone saturates the bound,
    so a small rounding allowance is added.
    """
    return n_sources * max(n_detectors, 1) * lam2 ** (n_max + 1) + ROUNDING_SLACK


# -- the three experiments in the photon-number basis ------------------------------


def fock_hom_state(mu: float, t_a: float, t_b: float, xi: float, n_max: int, sign="+") -> FockVector:
    lam = math.sqrt(mu / (1.0 + mu))
    state = fock_tmsv(lam, n_max, ("A", "B"), sign)
    state = fock_loss(state, t_a, "A", purify=True)
    state = fock_loss(state, t_b, "B", purify=True)
    state = fock_mode_mismatch(state, xi, "A", "B")
    for x, y in (("A", "B"), ("A.2", "B.2"), ("A.3", "B.3")):
        state = fock_beam_splitter(state, 0.5, x, y)
    return state


def fock_sagnac(mu: float, n_max: int, labels=("AH", "AV", "BH", "BV"), sign="+") -> FockVector:
    lam = math.sqrt(mu / (1.0 + mu))
    ah, av, bh, bv = labels
    state = fock_tensor(fock_tmsv(lam, n_max, (ah, av), sign), fock_tmsv(lam, n_max, (bh, bv), sign))
    return fock_swap(state, av, bv)


def fock_epr_state(mu: float, theta_a: float, theta_b: float, n_max: int, sign="+") -> FockVector:
    state = fock_sagnac(mu, n_max, sign=sign)
    state = fock_polarizer(state, theta_a, "AH", "AV")
    return fock_polarizer(state, theta_b, "BH", "BV")


def fock_ces_state(m_bm: int, mu: float, theta_a: float, theta_b: float, n_max: int, sign="+") -> FockVector:
    """CES chain without loss; per-arm loss goes into the detector weights."""
    loops = [
        fock_sagnac(mu, n_max, tuple(str(4 * k + j) for j in range(1, 5)), sign)
        for k in range(m_bm + 1)
    ]
    state = fock_tensor(*loops)
    for x in range(1, m_bm + 1):
        state = fock_beam_splitter(state, 0.5, str(4 * x + 1), str(4 * x - 1))
        state = fock_beam_splitter(state, 0.5, str(4 * x + 2), str(4 * x))
    state = fock_polarizer(state, theta_a, "2", "1")
    return fock_polarizer(state, theta_b, str(4 * m_bm + 4), str(4 * m_bm + 3))
