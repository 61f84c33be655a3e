"""Closed-form expressions for the HOM, EPR and CES setups.

These are transcribed independently of the generic pipeline and are used to
cross-check it.
"""
from __future__ import annotations

import math
from contextlib import contextmanager

import gmpy2
import numpy as np

from .experiments import CesConfig, EprConfig, HomConfig, visibility


@contextmanager
def _arithmetic(bits: int | None):
    """(number, sqrt, cos) in double precision, or in ``bits``-bit gmpy2 floats.

    The coincidence formulas subtract numbers close to 1, so a double evaluation
    loses about log10(1/P) digits; the multi-precision path is the exact reference.
    """
    if bits is None:
        yield float, math.sqrt, math.cos
        return
    ctx = gmpy2.get_context().copy()
    ctx.precision = bits
    with gmpy2.context(ctx):
        yield gmpy2.mpfr, gmpy2.sqrt, gmpy2.cos


def hom_sqrt_dets(c: HomConfig, xi: float | None = None, bits: int | None = None) -> tuple[float, float, float]:
    """sqrt(det(cov_A + I)), sqrt(det(cov_B + I)), sqrt(det(cov_AB + I))."""
    with _arithmetic(bits) as (num, sqrt, _):
        xi = num(c.xi if xi is None else xi)
        mu, ta, tb, ea, eb = (num(x) for x in (c.mu, c.t_a, c.t_b, c.eta_a, c.eta_b))

        def single(eta):
            inner = 1 + eta * mu / 4 * (2 * (ta + tb) - ta * tb * eta * (1 - xi**2))
            return 8 * sqrt(inner**2 - ta * tb * eta**2 * xi**2 * mu * (mu + 1))

        s, d = ea + eb, ea - eb
        inner = 1 + mu / 4 * (2 * (ta + tb) * s - ta * tb * (s**2 - xi**2 * d**2))
        joint = 64 * sqrt(inner**2 - ta * tb * d**2 * xi**2 * mu * (mu + 1))
        return single(ea), single(eb), joint


def hom_coincidence(c: HomConfig, delayed: bool = False, bits: int | None = None) -> float:
    """Ideal-detector (nu = 0) coincidence probability."""
    with _arithmetic(bits):
        da, db, dab = hom_sqrt_dets(c, 0.0 if delayed else None, bits)
        return float(1 - 8 / da - 8 / db + 64 / dab)


def hom_visibility(c: HomConfig) -> float:
    return visibility(hom_coincidence(c, delayed=True), hom_coincidence(c), normalize="high")


def hom_visibility_low_efficiency(mu: float) -> float:
    """Small detector efficiency, no other loss, mu << 1."""
    return (1 + 2 * mu) / (1 + 4 * mu)


def hom_visibility_ideal(mu: float) -> float:
    """Lossless, perfectly matched, mu << 1."""
    return (2 + 2 * mu) / (2 + 3 * mu)


def epr_sqrt_dets(c: EprConfig, bits: int | None = None) -> tuple[float, float, float]:
    with _arithmetic(bits) as (num, _, cos):
        mu = num(c.mu)
        ah, av, bh, bv = (num(x) for x in (c.eta_ah, c.eta_av, c.eta_bh, c.eta_bv))
        da = 4 * (1 + ah * mu) * (1 + av * mu)
        db = 4 * (1 + bh * mu) * (1 + bv * mu)

        def pair(x, y):
            return 1 + (x + y - x * y) * mu

        dab = 8 * (
            pair(ah, bh) * pair(av, bv)
            + pair(ah, bv) * pair(av, bh)
            + (ah - av) * (bh - bv) * mu * (mu + 1) * cos(2 * (num(c.theta_a) + num(c.theta_b)))
        )
        return da, db, dab


def epr_coincidence(c: EprConfig, bits: int | None = None) -> float:
    """Ideal-detector (nu = 0) coincidence probability at (theta_a, theta_b)."""
    with _arithmetic(bits):
        da, db, dab = epr_sqrt_dets(c, bits)
        return float(1 - 4 / da - 4 / db + 16 / dab)


def epr_visibility_simple(mu: float, eta: float) -> float:
    """No vertical leakage, equal horizontal efficiency ``eta`` in both arms."""
    return (1 + mu) / (1 + 3 * mu + 2 * eta * (2 - eta) * mu**2)


def sagnac_explicit(mu: float, sign: str = "+") -> np.ndarray:
    """The entangled Sagnac-loop covariance written out entry by entry."""
    s = 1.0 if sign == "+" else -1.0
    a = 2 * mu + 1
    c = 2 * math.sqrt(mu * (mu + 1))
    off = c * np.array([[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float)
    diag = a * np.eye(4)
    out = np.zeros((8, 8))
    out[:4, :4] = diag + s * off
    out[4:, 4:] = diag - s * off
    return out


def ces_block_matrix(c: CesConfig) -> np.ndarray:
    """CES covariance assembled from the A2, A4, B, C, D block pattern.

    The x-quadrature block carries the off-diagonal blocks with the TMSV sign
    and the p-quadrature block with the opposite sign.
    """
    mu, eta, m = c.mu, c.eta, c.m_bm
    ta, tb = c.theta_a, c.theta_b
    a2 = (2 * eta * mu + 1) * np.eye(2)
    a4 = (2 * eta * mu + 1) * np.eye(4)
    j2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    r2 = eta * math.sqrt(2 * mu * (mu + 1))
    sa, ca, sb, cb = math.sin(ta), math.cos(ta), math.sin(tb), math.cos(tb)
    b = r2 * np.array([[sa, ca], [ca, -sa], [-sa, -ca], [-ca, sa]])
    cc = eta * math.sqrt(mu * (mu + 1)) * np.block([[j2, j2], [-j2, -j2]])
    d = r2 * np.array([[sb, cb, sb, cb], [cb, -sb, cb, -sb]])

    n = 4 * m + 4
    starts = [0] + [2 + 4 * k for k in range(m)] + [n - 2]
    sizes = [2] + [4] * m + [2]

    def quadrature(sign: float) -> np.ndarray:
        g = np.zeros((n, n))
        for k, (st, sz) in enumerate(zip(starts, sizes)):
            g[st : st + sz, st : st + sz] = a2 if sz == 2 else a4
        blocks = [b] + [cc] * (m - 1) + [d]
        for k, blk in enumerate(blocks):
            r0, c0 = starts[k + 1], starts[k]
            g[r0 : r0 + blk.shape[0], c0 : c0 + blk.shape[1]] = sign * blk
            g[c0 : c0 + blk.shape[1], r0 : r0 + blk.shape[0]] = sign * blk.T
        return g

    s = 1.0 if c.sign == "+" else -1.0
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = quadrature(s)
    out[n:, n:] = quadrature(-s)
    return out
