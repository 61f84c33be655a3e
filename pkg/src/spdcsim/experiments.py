"""Builders for the HOM, Sagnac-loop EPR and concatenated-swapping experiments.

Each experiment is available through the generic pipeline (state builder +
click engine) and, where a closed form exists, through a direct
transcription of that closed form in :mod:`spdcsim.closed_forms`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .clicks import DetectorSpec, Outcome, evaluate_pattern
from .errors import InvalidArgument, UndefinedVisibility
from .gaussian import (
    GaussianState,
    MismatchSpec,
    apply_loss,
    apply_symplectic,
    beam_splitter,
    expand_mode_mismatch,
    make_tmsv,
    mismatched_beam_splitter,
    mode_swap,
    polarizer,
    tensor,
)


def lambda2_to_mu(lambda2: float) -> float:
    """Pair-generation probability lambda^2 -> mean photon number mu."""
    if not 0.0 <= lambda2 < 1.0:
        raise InvalidArgument(f"lambda^2 must be in [0, 1), got {lambda2}")
    return lambda2 / (1.0 - lambda2)


def mu_to_lambda2(mu: float) -> float:
    return mu / (1.0 + mu)


def pair_generation_rate(mu: float, sagnac: bool = False) -> float:
    """Photon-pair generation rate; a Sagnac loop pumps its crystal twice."""
    lam2 = mu_to_lambda2(mu)
    return 2.0 * lam2 if sagnac else lam2


def visibility(p_high: float, p_low: float, normalize: str = "sum") -> float:
    """(p_high - p_low) / (p_high + p_low), or / p_high with ``normalize='high'``."""
    denom = p_high + p_low if normalize == "sum" else p_high
    if denom <= 0.0:
        raise UndefinedVisibility(f"visibility denominator is {denom!r}")
    return (p_high - p_low) / denom


def _unit(name: str, value: float, open_top: bool = False) -> float:
    value = float(value)
    ok = 0.0 <= value < 1.0 if open_top else 0.0 <= value <= 1.0
    if not ok:
        raise InvalidArgument(f"{name} must be in [0, 1{')' if open_top else ']'}, got {value}")
    return value


# -- Hong-Ou-Mandel ---------------------------------------------------------------


@dataclass(frozen=True)
class HomConfig:
    mu: float
    t_a: float = 1.0
    t_b: float = 1.0
    eta_a: float = 1.0
    eta_b: float = 1.0
    xi: float = 1.0
    nu_a: float = 0.0
    nu_b: float = 0.0
    sign: str = "+"

    def __post_init__(self):
        if not self.mu >= 0:
            raise InvalidArgument(f"mu must be >= 0, got {self.mu}")
        for name in ("t_a", "t_b", "eta_a", "eta_b", "xi"):
            _unit(name, getattr(self, name))
        for name in ("nu_a", "nu_b"):
            _unit(name, getattr(self, name), open_top=True)

    @classmethod
    def ideal(cls, mu: float) -> "HomConfig":
        return cls(mu)


HOM_A = ("A", "A.2", "A.3")
HOM_B = ("B", "B.2", "B.3")


def hom_state(config: HomConfig, delayed: bool = False) -> GaussianState:
    """Six-mode state right before the detectors (detector loss not included)."""
    xi = 0.0 if delayed else config.xi
    state = make_tmsv(config.mu, config.sign, ("A", "B"))
    state = apply_loss(state, [config.t_a, config.t_b], ["A", "B"])
    state = expand_mode_mismatch(state, MismatchSpec(xi, ("A", "B")))
    state = mismatched_beam_splitter(state, 0.5, "A", "B")
    order = HOM_A + HOM_B
    q = _quads(state, order)
    return GaussianState._trusted(state.cov[q[:, None], q], state.disp[q], order)


def _quads(state: GaussianState, order) -> np.ndarray:
    idx = np.array(state.indices(order))
    return np.concatenate([idx, idx + state.n_modes])


def hom_detectors(config: HomConfig) -> list[DetectorSpec]:
    return [
        DetectorSpec("A", HOM_A, config.eta_a, config.nu_a),
        DetectorSpec("B", HOM_B, config.eta_b, config.nu_b),
    ]


def hom_coincidence(config: HomConfig, delayed: bool = False, precision="auto") -> float:
    state = hom_state(config, delayed)
    pattern = {"A": Outcome.CLICK, "B": Outcome.CLICK}
    return evaluate_pattern(state, hom_detectors(config), pattern, precision).probability


def hom_visibility(config: HomConfig, precision="auto") -> float:
    """(P_mean - P_min) / P_mean with P_mean the fully delayed coincidence."""
    p_min = hom_coincidence(config, delayed=False, precision=precision)
    p_mean = hom_coincidence(config, delayed=True, precision=precision)
    return visibility(p_mean, p_min, normalize="high")


# -- Sagnac loop EPR --------------------------------------------------------------

SAGNAC_LABELS = ("AH", "AV", "BH", "BV")


def sagnac_source(mu: float, sign="+", labels=SAGNAC_LABELS) -> GaussianState:
    """Two TMSVs (AH, AV) and (BH, BV) with the vertical modes swapped."""
    ah, av, bh, bv = labels
    state = tensor(make_tmsv(mu, sign, (ah, av)), make_tmsv(mu, sign, (bh, bv)))
    return apply_symplectic(state, mode_swap(av, bv))


@dataclass(frozen=True)
class EprConfig:
    """Sagnac-loop EPR test; the ``eta_*`` are PBS transmittance x detector efficiency."""

    mu: float
    theta_a: float = 0.0
    theta_b: float = 0.0
    eta_ah: float = 1.0
    eta_av: float = 1.0
    eta_bh: float = 1.0
    eta_bv: float = 1.0
    nu: float = 0.0
    sign: str = "+"

    def __post_init__(self):
        if not self.mu >= 0:
            raise InvalidArgument(f"mu must be >= 0, got {self.mu}")
        for name in ("eta_ah", "eta_av", "eta_bh", "eta_bv"):
            _unit(name, getattr(self, name))
        _unit("nu", self.nu, open_top=True)

    @classmethod
    def from_pbs(cls, mu, t_h, t_v, eta_h, eta_v=None, **kw) -> "EprConfig":
        """Fold PBS extinction (t_H, t_V) into the per-arm efficiencies."""
        eta_v = eta_h if eta_v is None else eta_v
        return cls(mu, eta_ah=t_h * eta_h, eta_av=t_v * eta_v, eta_bh=t_h * eta_h, eta_bv=t_v * eta_v, **kw)


def epr_state(config: EprConfig) -> GaussianState:
    state = sagnac_source(config.mu, config.sign)
    state = apply_symplectic(state, polarizer(config.theta_a, "AH", "AV"))
    state = apply_symplectic(state, polarizer(config.theta_b, "BH", "BV"))
    etas = [config.eta_ah, config.eta_av, config.eta_bh, config.eta_bv]
    return apply_loss(state, etas, SAGNAC_LABELS)


def epr_detectors(config: EprConfig) -> list[DetectorSpec]:
    return [
        DetectorSpec("A", ("AH", "AV"), 1.0, config.nu),
        DetectorSpec("B", ("BH", "BV"), 1.0, config.nu),
    ]


def epr_coincidence(config: EprConfig, precision="auto") -> float:
    pattern = {"A": Outcome.CLICK, "B": Outcome.CLICK}
    return evaluate_pattern(epr_state(config), epr_detectors(config), pattern, precision).probability


def epr_visibility(config: EprConfig, precision="auto") -> float:
    """Fringe visibility from the settings (0, pi/2) [max] and (0, 0) [min]."""
    p_max = epr_coincidence(replace(config, theta_a=0.0, theta_b=math.pi / 2), precision)
    p_min = epr_coincidence(replace(config, theta_a=0.0, theta_b=0.0), precision)
    return visibility(p_max, p_min)


# -- concatenated entanglement swapping -------------------------------------------


@dataclass(frozen=True)
class CesConfig:
    """Concatenated swapping with ``m_bm`` Bell measurements.

    ``eta`` is the total per-arm transmittance (channel x detector); see
    :func:`per_arm_transmittance`.
    """

    m_bm: int
    mu: float
    eta: float = 1.0
    nu: float = 0.0
    theta_a: float = 0.0
    theta_b: float = 0.0
    sign: str = "+"

    def __post_init__(self):
        if int(self.m_bm) != self.m_bm or self.m_bm < 1:
            raise InvalidArgument(f"m_bm must be an integer >= 1, got {self.m_bm}")
        if not self.mu >= 0:
            raise InvalidArgument(f"mu must be >= 0, got {self.mu}")
        _unit("eta", self.eta)
        _unit("nu", self.nu, open_top=True)

    @property
    def n_modes(self) -> int:
        return 4 * self.m_bm + 4

    @property
    def n_detectors(self) -> int:
        return 2 * self.m_bm + 2


def ces_labels(m_bm: int) -> tuple[str, ...]:
    """Modes are numbered 1..4 m_bm + 4 from left to right."""
    return tuple(str(k) for k in range(1, 4 * m_bm + 5))


def ces_source(config: CesConfig) -> GaussianState:
    """m_bm + 1 Sagnac loops side by side, before any Bell measurement."""
    loops = []
    for k in range(config.m_bm + 1):
        labels = tuple(str(4 * k + j) for j in range(1, 5))
        loops.append(sagnac_source(config.mu, config.sign, labels))
    return tensor(*loops)


def ces_state(config: CesConfig) -> GaussianState:
    """Covariance after Bell-measurement beam splitters, end polarizers and loss."""
    state = ces_source(config)
    m = config.m_bm
    # Ports are listed right-to-left so the reflected amplitudes carry the
    # signs of the block layout in closed_forms.ces_block_matrix; click
    # statistics in the H/V basis do not depend on this orientation.
    for x in range(1, m + 1):
        state = apply_symplectic(state, beam_splitter(0.5, str(4 * x + 1), str(4 * x - 1)))
        state = apply_symplectic(state, beam_splitter(0.5, str(4 * x + 2), str(4 * x)))
    state = apply_symplectic(state, polarizer(config.theta_a, "2", "1"))
    state = apply_symplectic(state, polarizer(config.theta_b, str(4 * m + 4), str(4 * m + 3)))
    return apply_loss(state, config.eta)


def ces_detector_modes(m_bm: int) -> list[int]:
    """Detected modes: both ends plus the heralding pair of every Bell measurement."""
    modes = {1, 4 * m_bm + 3}
    for x in range(1, m_bm + 1):
        modes |= {4 * x - 1, 4 * x + 2}
    return sorted(modes)


def ces_detectors(config: CesConfig) -> list[DetectorSpec]:
    # ids are zero-padded so detector-id order equals mode order
    width = len(str(config.n_modes))
    return [
        DetectorSpec(f"D{k:0{width}d}", (str(k),), 1.0, config.nu)
        for k in ces_detector_modes(config.m_bm)
    ]


def ces_evaluate(config: CesConfig, precision="auto"):
    detectors = ces_detectors(config)
    pattern = {d.id: Outcome.CLICK for d in detectors}
    return evaluate_pattern(ces_state(config), detectors, pattern, precision)


def ces_joint_click(config: CesConfig, precision="auto") -> float:
    return ces_evaluate(config, precision).probability


def ces_visibility(config: CesConfig, precision="auto") -> float:
    """EPR visibility of the swapped pair from settings (0, pi/2) and (0, 0)."""
    p_max = ces_joint_click(replace(config, theta_a=0.0, theta_b=math.pi / 2), precision)
    p_min = ces_joint_click(replace(config, theta_a=0.0, theta_b=0.0), precision)
    return visibility(p_max, p_min)


def ces_angle_scan(config: CesConfig, n_angles: int = 73, precision="auto"):
    """Joint-click probability over theta_b in [0, pi] at theta_a = 0.

    Used to check that (0, 0) and (0, pi/2) really are the fringe extrema.
    """
    thetas = np.linspace(0.0, math.pi, n_angles)
    probs = np.array(
        [ces_joint_click(replace(config, theta_a=0.0, theta_b=float(t)), precision) for t in thetas]
    )
    return thetas, probs


def per_arm_transmittance(total_km: float, alpha_db_per_km: float, eta_d: float, m_bm: int) -> float:
    """eta = eta_D * 10^(-alpha L / 10) with L = total / (2 m_bm + 2) per arm."""
    if total_km < 0 or alpha_db_per_km < 0:
        raise InvalidArgument("distance and attenuation must be non-negative")
    _unit("eta_d", eta_d)
    arm = total_km / (2 * m_bm + 2)
    return eta_d * 10.0 ** (-alpha_db_per_km * arm / 10.0)


def ces_distance_sweep(total_km, alpha_db_per_km, eta_d, nu, m_bm, mu_grid, precision="auto"):
    """Rows of (mu, visibility) at the per-arm transmittance implied by the link."""
    eta = per_arm_transmittance(total_km, alpha_db_per_km, eta_d, m_bm)
    rows = []
    for mu in mu_grid:
        cfg = CesConfig(m_bm, float(mu), eta, nu)
        rows.append((float(mu), ces_visibility(cfg, precision)))
    return rows
