"""Multimode Gaussian states in the xxpp quadrature ordering.

Conventions: the quadrature vector is ``R = (x_1..x_n, p_1..p_n)`` with
``x = (a + a^dag)/sqrt(2)``, so the vacuum covariance matrix is the identity
and a coherent state ``|alpha>`` has displacement ``sqrt(2) (Re a, Im a)``.
Operations act as ``cov -> S^T cov S`` and ``disp -> S^T disp``.

States and ops are immutable; every operation returns a new object.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import InvalidArgument

Mode = Union[int, str]

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def symplectic_form(n_modes: int) -> np.ndarray:
    """Omega for xxpp ordering: [[0, I], [-I, 0]]."""
    eye = np.eye(n_modes)
    zero = np.zeros((n_modes, n_modes))
    return np.block([[zero, eye], [-eye, zero]])


def quadrature_indices(n_modes: int, modes: Sequence[int]) -> np.ndarray:
    """Row/column indices of the x- then p-quadratures of ``modes``."""
    modes = np.asarray(modes, dtype=int)
    return np.concatenate([modes, modes + n_modes])


@dataclass(frozen=True)
class GaussianState:
    """Covariance matrix, displacement and mode labels of an n-mode Gaussian state."""

    cov: np.ndarray
    disp: np.ndarray
    mode_labels: tuple[str, ...]

    def __post_init__(self):
        cov = _frozen(self.cov)
        disp = _frozen(self.disp)
        labels = tuple(str(lab) for lab in self.mode_labels)
        n = len(labels)
        if n < 1:
            raise InvalidArgument("a state needs at least one mode")
        if len(set(labels)) != n:
            raise InvalidArgument(f"duplicate mode labels in {labels}")
        if cov.shape != (2 * n, 2 * n) or disp.shape != (2 * n,):
            raise InvalidArgument(
                f"shape mismatch: cov {cov.shape}, disp {disp.shape} for {n} modes"
            )
        if cov.size and not np.abs(cov - cov.T).max() <= SYMMETRY_TOL:
            raise InvalidArgument("covariance matrix is not symmetric")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "disp", disp)
        object.__setattr__(self, "mode_labels", labels)

    @classmethod
    def _trusted(cls, cov: np.ndarray, disp: np.ndarray, labels: tuple[str, ...]) -> "GaussianState":
        """Wrap freshly computed arrays without re-validating; for internal ops only."""
        state = object.__new__(cls)
        cov.setflags(write=False)
        disp.setflags(write=False)
        object.__setattr__(state, "cov", cov)
        object.__setattr__(state, "disp", disp)
        object.__setattr__(state, "mode_labels", labels)
        return state

    @property
    def n_modes(self) -> int:
        return len(self.mode_labels)

    def index(self, mode: Mode) -> int:
        """Resolve a label or integer position to a mode index."""
        if isinstance(mode, (int, np.integer)) and not isinstance(mode, bool):
            if not 0 <= mode < self.n_modes:
                raise InvalidArgument(f"mode index {mode} out of range")
            return int(mode)
        try:
            return self.mode_labels.index(str(mode))
        except ValueError:
            raise InvalidArgument(f"unknown mode {mode!r}") from None

    def indices(self, modes: Iterable[Mode]) -> list[int]:
        return [self.index(m) for m in modes]

    def min_physical_eigenvalue(self) -> float:
        """Smallest eigenvalue of the Hermitian matrix cov + i Omega."""
        herm = self.cov + 1j * symplectic_form(self.n_modes)
        return float(np.linalg.eigvalsh(herm).min())

    def is_physical(self, tol: float = PHYSICALITY_TOL) -> bool:
        return self.min_physical_eigenvalue() >= -tol

    def mean_photon_number(self) -> float:
        """Total <n> = (tr(cov) - 2n)/4 + |d|^2/2 (d = sqrt(2) alpha)."""
        return float((np.trace(self.cov) - 2 * self.n_modes) / 4 + self.disp @ self.disp / 2)

    def relabel(self, labels: Sequence[str]) -> "GaussianState":
        return GaussianState(self.cov, self.disp, tuple(labels))


def _default_labels(n: int, labels) -> tuple[str, ...]:
    if labels is None:
        return tuple(str(i) for i in range(n))
    labels = tuple(str(lab) for lab in labels)
    if len(labels) != n:
        raise InvalidArgument(f"expected {n} labels, got {len(labels)}")
    return labels


def make_vacuum(n_modes: int, labels: Sequence[str] | None = None) -> GaussianState:
    if n_modes < 1:
        raise InvalidArgument("n_modes must be >= 1")
    return GaussianState(np.eye(2 * n_modes), np.zeros(2 * n_modes), _default_labels(n_modes, labels))


def make_coherent(alpha_re: float, alpha_im: float = 0.0, label: str = "0") -> GaussianState:
    disp = np.sqrt(2.0) * np.array([alpha_re, alpha_im], dtype=float)
    return GaussianState(np.eye(2), disp, (label,))


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not mu >= 0:
        raise InvalidArgument(f"mean photon number must be >= 0, got {mu}")
    return mu


def _sign(sign) -> float:
    if sign in (1, "+", +1.0):
        return 1.0
    if sign in (-1, "-", -1.0):
        return -1.0
    raise InvalidArgument(f"sign must be + or -, got {sign!r}")


def make_tmsv(mu: float, sign="+", labels: Sequence[str] | None = None) -> GaussianState:
    """Two-mode squeezed vacuum with ``mu`` mean photons per mode.

    The x-block carries ``sign * 2 sqrt(mu(mu+1))`` off the diagonal and the
    p-block the opposite sign.
    """
    mu = _check_mu(mu)
    s = _sign(sign)
    c = 2.0 * np.sqrt(mu * (mu + 1.0))
    a = 2.0 * mu + 1.0
    cov = np.zeros((4, 4))
    cov[:2, :2] = [[a, s * c], [s * c, a]]
    cov[2:, 2:] = [[a, -s * c], [-s * c, a]]
    return GaussianState(cov, np.zeros(4), _default_labels(2, labels))


def make_thermal(mu: float, label: str = "0") -> GaussianState:
    mu = _check_mu(mu)
    return GaussianState((2.0 * mu + 1.0) * np.eye(2), np.zeros(2), (label,))


def partial_trace(state: GaussianState, keep: Iterable[Mode]) -> GaussianState:
    """Reduced state on ``keep`` (in the given order)."""
    keep = list(keep)
    if not keep:
        raise InvalidArgument("keep must be nonempty")
    idx = state.indices(keep)
    if len(set(idx)) != len(idx):
        raise InvalidArgument("keep contains repeated modes")
    q = quadrature_indices(state.n_modes, idx)
    return GaussianState._trusted(
        state.cov[q[:, None], q],
        state.disp[q],
        tuple(state.mode_labels[i] for i in idx),
    )


def tensor(*states: GaussianState) -> GaussianState:
    """Product state; modes are concatenated in argument order."""
    if not states:
        raise InvalidArgument("tensor needs at least one state")
    labels = [lab for s in states for lab in s.mode_labels]
    if len(set(labels)) != len(labels):
        raise InvalidArgument(f"duplicate labels in tensor product: {labels}")
    n = len(labels)
    cov = np.zeros((2 * n, 2 * n))
    disp = np.zeros(2 * n)
    offset = 0
    for s in states:
        k = s.n_modes
        q_local = np.arange(2 * k)
        q_global = quadrature_indices(n, range(offset, offset + k))
        cov[q_global[:, None], q_global] = s.cov[q_local[:, None], q_local]
        disp[q_global] = s.disp
        offset += k
    return GaussianState._trusted(cov, disp, tuple(labels))


@dataclass(frozen=True)
class SymplecticOp:
    """A symplectic matrix in local xxpp ordering acting on ``acts_on``.

    ``acts_on`` holds mode labels or indices; they are resolved against the
    state the op is applied to.
    """

    matrix: np.ndarray
    acts_on: tuple

    def __post_init__(self):
        m = _frozen(self.matrix)
        k = len(self.acts_on)
        if m.shape != (2 * k, 2 * k):
            raise InvalidArgument(f"matrix shape {m.shape} does not match {k} modes")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "acts_on", tuple(self.acts_on))

    def embed(self, state_or_n) -> np.ndarray:
        """Full 2n x 2n matrix, identity outside ``acts_on``."""
        if isinstance(state_or_n, GaussianState):
            n = state_or_n.n_modes
            idx = state_or_n.indices(self.acts_on)
        else:
            n = int(state_or_n)
            idx = [int(i) for i in self.acts_on]
        if len(set(idx)) != len(idx):
            raise InvalidArgument("op acts on repeated modes")
        full = np.eye(2 * n)
        q = quadrature_indices(n, idx)
        full[q[:, None], q] = self.matrix
        return full

    def is_symplectic(self, tol: float = 1e-12) -> bool:
        omega = symplectic_form(len(self.acts_on))
        return bool(np.abs(self.matrix.T @ omega @ self.matrix - omega).max() < tol)

    def is_orthogonal(self, tol: float = 1e-12) -> bool:
        m = self.matrix
        return bool(np.abs(m.T @ m - np.eye(len(m))).max() < tol)


def _two_mode(block: np.ndarray, a: Mode, b: Mode) -> SymplecticOp:
    if a == b:
        raise InvalidArgument("beam splitter needs two distinct modes")
    m = np.zeros((4, 4))
    m[:2, :2] = block
    m[2:, 2:] = block
    return SymplecticOp(m, (a, b))


def beam_splitter(t: float, a: Mode = 0, b: Mode = 1) -> SymplecticOp:
    """Beam splitter of transmittance ``t`` between modes ``a`` and ``b``."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"transmittance must be in [0, 1], got {t}")
    r = math.sqrt(1.0 - t)
    st = math.sqrt(t)
    return _two_mode(np.array([[st, r], [-r, st]]), a, b)


def polarizer(theta: float, h: Mode, v: Mode) -> SymplecticOp:
    """Half-wave plate + PBS at angle ``theta``: a beam splitter with t = cos^2(theta).

    Written with cos/sin directly so angles outside [0, pi/2] keep their sign.
    """
    c, s = np.cos(theta), np.sin(theta)
    return _two_mode(np.array([[c, s], [-s, c]]), h, v)


def phase_shift(phi: float, mode: Mode = 0) -> SymplecticOp:
    """Rotation R(phi) of one mode; x and p entries are scattered, not block-placed."""
    c, s = np.cos(phi), np.sin(phi)
    return SymplecticOp(np.array([[c, s], [-s, c]]), (mode,))


def mode_swap(a: Mode, b: Mode) -> SymplecticOp:
    """Exchange the contents of two modes."""
    return _two_mode(np.array([[0.0, 1.0], [1.0, 0.0]]), a, b)


def parallel(*ops: SymplecticOp) -> SymplecticOp:
    """One op for several ops on disjoint modes, so they are applied in a single pass."""
    if len(ops) == 1:
        return ops[0]
    modes = [m for op in ops for m in op.acts_on]
    if len(set(modes)) != len(modes):
        raise InvalidArgument("parallel ops must act on disjoint modes")
    n = len(modes)
    full = np.zeros((2 * n, 2 * n))
    offset = 0
    for op in ops:
        k = len(op.acts_on)
        q = np.array([*range(offset, offset + k), *range(n + offset, n + offset + k)])
        full[q[:, None], q] = op.matrix
        offset += k
    return SymplecticOp(full, tuple(modes))


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def apply_symplectic(state: GaussianState, op: SymplecticOp | np.ndarray) -> GaussianState:
    if isinstance(op, SymplecticOp):
        # only the rows and columns of the touched quadratures change
        idx = state.indices(op.acts_on)
        if len(set(idx)) != len(idx):
            raise InvalidArgument("op acts on repeated modes")
        n = state.n_modes
        q = np.array(idx + [i + n for i in idx])
        m = op.matrix
        cov = np.array(state.cov)
        cov[:, q] = cov[:, q] @ m
        cov[q, :] = m.T @ cov[q, :]
        disp = np.array(state.disp)
        disp[q] = m.T @ disp[q]
        return GaussianState._trusted(_symmetrize(cov), disp, state.mode_labels)
    s = np.asarray(op, dtype=float)
    if s.shape != state.cov.shape:
        raise InvalidArgument(f"symplectic matrix {s.shape} vs state {state.cov.shape}")
    return GaussianState(_symmetrize(s.T @ state.cov @ s), s.T @ state.disp, state.mode_labels)


def apply_ops(state: GaussianState, ops: Iterable[SymplecticOp]) -> GaussianState:
    """Apply ops left to right (first op acts first)."""
    for op in ops:
        state = apply_symplectic(state, op)
    return state


@dataclass(frozen=True)
class LossChannel:
    """Per-mode transmittances; modes not listed are untouched."""

    transmittances: Mapping = field(default_factory=dict)

    def __post_init__(self):
        for mode, t in self.transmittances.items():
            if not 0.0 <= float(t) <= 1.0:
                raise InvalidArgument(f"transmittance for {mode!r} must be in [0, 1], got {t}")

    def vector(self, state: GaussianState) -> np.ndarray:
        t = np.ones(state.n_modes)
        for mode, value in self.transmittances.items():
            t[state.index(mode)] = float(value)
        return t


def apply_loss(state: GaussianState, channel, modes: Iterable[Mode] | None = None) -> GaussianState:
    """Pure-loss channel: cov -> K cov K + (I - K^2), disp -> K disp with K = diag(sqrt t).

    ``channel`` is a LossChannel, or a scalar / sequence of transmittances for
    ``modes`` (all modes when omitted).
    """
    if not isinstance(channel, LossChannel):
        targets = list(range(state.n_modes)) if modes is None else list(modes)
        values = np.broadcast_to(np.asarray(channel, dtype=float), (len(targets),))
        channel = LossChannel(dict(zip(targets, values)))
    t = channel.vector(state)
    k = np.sqrt(np.concatenate([t, t]))
    cov = k[:, None] * state.cov * k[None, :] + np.diag(1.0 - k**2)
    return GaussianState._trusted(_symmetrize(cov), k * state.disp, state.mode_labels)


@dataclass(frozen=True)
class MismatchSpec:
    """Mode-match factor ``xi`` between the pulses in modes ``pulse_pair``."""

    xi: float
    pulse_pair: tuple

    def __post_init__(self):
        if not 0.0 <= float(self.xi) <= 1.0:
            raise InvalidArgument(f"mode match factor must be in [0, 1], got {self.xi}")
        if len(self.pulse_pair) != 2 or self.pulse_pair[0] == self.pulse_pair[1]:
            raise InvalidArgument("pulse_pair needs two distinct modes")

    def aux_labels(self, state: GaussianState) -> tuple[str, str, str, str]:
        """Labels of the (A2, B2, A3, B3) auxiliary modes."""
        a = state.mode_labels[state.index(self.pulse_pair[0])]
        b = state.mode_labels[state.index(self.pulse_pair[1])]
        return f"{a}.2", f"{b}.2", f"{a}.3", f"{b}.3"


def expand_mode_mismatch(state: GaussianState, spec: MismatchSpec) -> GaussianState:
    """Append four vacuum modes and split the pulses with virtual beam splitters.

    Pulse A leaks into A.2 and pulse B into B.3 with transmittance ``xi``;
    A.3 and B.2 remain vacuum. Only the pairs (A, B), (A.2, B.2), (A.3, B.3)
    should be combined afterwards, see :func:`mismatched_beam_splitter`.
    """
    a, b = spec.pulse_pair
    a2, b2, a3, b3 = spec.aux_labels(state)
    expanded = tensor(state, make_vacuum(4, (a2, b2, a3, b3)))
    return apply_symplectic(expanded, parallel(beam_splitter(spec.xi, a, a2), beam_splitter(spec.xi, b, b3)))


def mismatched_beam_splitter(state: GaussianState, t: float, a: Mode, b: Mode) -> GaussianState:
    """Real beam splitter acting on a mode-mismatch expanded pair (A, B)."""
    la = state.mode_labels[state.index(a)]
    lb = state.mode_labels[state.index(b)]
    pairs = ((la, lb), (f"{la}.2", f"{lb}.2"), (f"{la}.3", f"{lb}.3"))
    return apply_symplectic(state, parallel(*(beam_splitter(t, x, y) for x, y in pairs)))


def evaluate_characteristic_function(state: GaussianState, x) -> complex:
    """chi(x) = exp(-x^T cov x / 4 - i d^T x)."""
    x = np.asarray(x, dtype=float)
    if x.shape != state.disp.shape:
        raise InvalidArgument(f"argument shape {x.shape} vs {state.disp.shape}")
    return complex(np.exp(-0.25 * x @ state.cov @ x - 1j * state.disp @ x))
