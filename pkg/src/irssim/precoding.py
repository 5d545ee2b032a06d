"""Zero-forcing precoding, per-user SNR/SINR and throughput accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import steering_vector

COND_LIMIT = 1e12


class IllConditionedError(np.linalg.LinAlgError):
    """The Gram matrix H H^H is too ill conditioned to invert reliably.

    Deliberately not regularized away: channel collapse under dense
    deployments is a studied effect and silently fixing it would hide it.
    """

    def __init__(self, cond: float):
        super().__init__(f"channel Gram matrix condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
        self.cond = cond


@dataclass(frozen=True)
class Precoder:
    """Zero-forcing transmit matrix Gamma = a H^+ Q^{1/2} at full power."""

    gamma: np.ndarray       # (M1, K)
    scale: float            # the power-normalization coefficient a
    q_diag: np.ndarray      # (K,) QoS weights


@dataclass(frozen=True)
class SnrReport:
    """Per-user SNR/rate plus the scalar objective behind them."""

    snr: np.ndarray         # (K,) linear
    rate: np.ndarray        # (K,) bit/s/Hz
    objective: float        # Tr{(H H^H)^-1 Q}
    cond: float             # condition number of H H^H

    @property
    def snr_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.snr)


def _gram_solve(h: np.ndarray, q_diag: np.ndarray):
    """Solve (H H^H) X = Q^{1/2} and report the Gram conditioning.

    Working on the K x K Gram system avoids forming the pseudo-inverse of the
    wide H explicitly; K is small compared to the number of BS antennas.
    """
    gram = h @ h.conj().T
    cond = float(np.linalg.cond(gram))
    if not math.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(cond)
    sqrt_q = np.diag(np.sqrt(q_diag))
    x = np.linalg.solve(gram, sqrt_q)
    return x, cond


def zf_precoder(h: np.ndarray, q_diag: Optional[np.ndarray], tx_power_w: float) -> Precoder:
    """Zero-forcing precoder satisfying H Gamma = a Q^{1/2} at full power.

    ``h`` is the K x M1 effective channel (K <= M1, full row rank); ``q_diag``
    holds the per-user QoS weights (identity when omitted).
    """
    h = np.asarray(h)
    k, m1 = h.shape
    if k > m1:
        raise ValueError(f"zero-forcing needs K <= M1; got K={k}, M1={m1}")
    q_diag = np.ones(k) if q_diag is None else np.asarray(q_diag, dtype=float)
    x, _ = _gram_solve(h, q_diag)
    pinv_q = h.conj().T @ x                       # H^H (H H^H)^-1 Q^{1/2}
    scale = math.sqrt(tx_power_w) / np.linalg.norm(pinv_q)
    return Precoder(gamma=scale * pinv_q, scale=scale, q_diag=q_diag)


def snr_per_ue(h: np.ndarray, q_diag: Optional[np.ndarray], tx_power_w: float,
               noise_power_w: float) -> SnrReport:
    """Received SNR under zero-forcing: SNR_k = Pt q_k / (sigma^2 Tr{(HH^H)^-1 Q}).

    With identity Q every user sees the same SNR.
    """
    h = np.asarray(h)
    k = h.shape[0]
    q_diag = np.ones(k) if q_diag is None else np.asarray(q_diag, dtype=float)
    x, cond = _gram_solve(h, q_diag)
    # ||H^+ Q^{1/2}||_F^2 collapses to Tr{(H H^H)^-1 Q}.
    objective = float(np.real(np.trace(np.diag(np.sqrt(q_diag)) @ x)))
    snr = tx_power_w * q_diag / (noise_power_w * objective)
    return SnrReport(snr=snr, rate=np.log2(1.0 + snr), objective=objective, cond=cond)


def sinr_with_precoder(h_true: np.ndarray, precoder: Precoder,
                       noise_power_w: float) -> np.ndarray:
    """Per-user SINR when ``precoder`` is applied over the channel ``h_true``.

    When the precoder was built from a different channel estimate (partial
    CSI, quantized phase shifters) the off-diagonal leakage counts as
    interference; with matching channels this reduces to the ZF SNR.
    """
    g = np.asarray(h_true) @ precoder.gamma       # (K, K) effective link matrix
    power = np.abs(g) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return signal / (noise_power_w + interference)


def throughput_gbps(rates: Sequence[float], n_users: int, bandwidth_hz: float) -> float:
    """Average network throughput K * B * E[rate], in Gbit/s."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        raise ValueError("need at least one rate sample")
    return n_users * bandwidth_hz * float(rates.mean()) / 1e9


def bs_pattern(gamma: np.ndarray, spacing_wl: float, count: int, angles) -> np.ndarray:
    """Per-stream BS array gains |s(angle)^H gamma_k|^2, shape (K, len(angles))."""
    angles = np.asarray(angles, dtype=float)
    if np.any(np.abs(angles) >= math.pi / 2):
        raise ValueError("pattern angles must lie inside (-pi/2, pi/2)")
    responses = np.stack([steering_vector(spacing_wl, count, a) for a in angles], axis=0)
    g = responses.conj() @ gamma                  # (A, K)
    return (np.abs(g) ** 2).T
