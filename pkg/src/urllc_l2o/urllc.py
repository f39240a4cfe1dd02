"""Uplink URLLC link model: finite-blocklength rate, QoS exponent, effective capacity.

All quantities are SI internally (Hz, W, s, bits); rates are in packets per
frame. :class:`SystemConfig` converts from the dBm / ms / bytes units used in
configuration files.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc

LN2 = math.log(2.0)


def dbm_to_watts(p_dbm):
    w = 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)
    return float(w) if w.ndim == 0 else w


def watts_to_dbm(p_w):
    return 10.0 * math.log10(p_w) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Physical and protocol constants of a single-user uplink.

    Defaults reproduce the simulation setup used throughout the package:
    0.1 ms frames with 0.05 ms of uplink data, 20-byte packets, 23 dBm
    transmit power, -173 dBm/Hz noise, 8 receive antennas, one packet per
    frame, a 10-frame delay budget and 1e-5 overall loss probability.
    """

    frame_duration: float = 1e-4  # s
    ul_duration: float = 5e-5  # s
    packet_size: float = 160.0  # bits
    max_tx_power: float = dbm_to_watts(23.0)  # W
    noise_psd: float = dbm_to_watts(-173.0)  # W/Hz
    num_antennas: int = 8
    arrival_rate: float = 1.0  # packets/frame
    delay_bound: int = 10  # frames
    tx_delay: int = 1  # frames
    dec_delay: int = 1  # frames
    reliability: float = 1e-5  # overall packet loss target
    cell_min_d: float = 50.0  # m
    cell_max_d: float = 250.0  # m

    def __post_init__(self):
        positive = ("frame_duration", "ul_duration", "packet_size", "max_tx_power",
                    "noise_psd", "arrival_rate", "cell_min_d", "cell_max_d")
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if self.num_antennas < 1:
            raise ValueError("num_antennas must be >= 1")
        if self.ul_duration > self.frame_duration:
            raise ValueError("uplink duration cannot exceed the frame duration")
        if min(self.delay_bound, self.tx_delay, self.dec_delay) < 0:
            raise ValueError("delays must be non-negative")
        if self.queue_delay_bound < 1:
            raise ValueError("delay_bound must exceed tx_delay + dec_delay by at least one frame")
        if not 0.0 < self.reliability < 1.0:
            raise ValueError(f"reliability must lie in (0, 1), got {self.reliability}")
        if self.cell_min_d > self.cell_max_d:
            raise ValueError("cell_min_d must not exceed cell_max_d")

    @property
    def queue_delay_bound(self):
        """Frames left for queueing after transmission and decoding."""
        return self.delay_bound - self.tx_delay - self.dec_delay

    @property
    def decoding_error(self):
        # loss budget split evenly between decoding errors and queueing violations
        return self.reliability / 2.0

    @property
    def qos_exponent(self):
        return qos_exponent(self)

    def with_reliability(self, reliability):
        return dataclasses.replace(self, reliability=float(reliability))

    def to_dict(self):
        """Configuration-file representation (dBm, ms, bytes)."""
        return {
            "frame_duration_ms": _clean(self.frame_duration * 1e3),
            "ul_duration_ms": _clean(self.ul_duration * 1e3),
            "packet_size_bytes": _clean(self.packet_size / 8.0),
            "max_tx_power_dbm": _clean(watts_to_dbm(self.max_tx_power)),
            "noise_psd_dbm_per_hz": _clean(watts_to_dbm(self.noise_psd)),
            "num_antennas": int(self.num_antennas),
            "arrival_rate_packets_per_frame": _clean(self.arrival_rate),
            "delay_bound_frames": int(self.delay_bound),
            "tx_delay_frames": int(self.tx_delay),
            "dec_delay_frames": int(self.dec_delay),
            "reliability": _clean(self.reliability),
            "cell_min_d_m": _clean(self.cell_min_d),
            "cell_max_d_m": _clean(self.cell_max_d),
        }

    @classmethod
    def from_dict(cls, data):
        known = set(cls().to_dict())
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown system config keys: {sorted(unknown)}")
        d = {**cls().to_dict(), **data}
        return cls(
            frame_duration=float(d["frame_duration_ms"]) * 1e-3,
            ul_duration=float(d["ul_duration_ms"]) * 1e-3,
            packet_size=float(d["packet_size_bytes"]) * 8.0,
            max_tx_power=dbm_to_watts(float(d["max_tx_power_dbm"])),
            noise_psd=dbm_to_watts(float(d["noise_psd_dbm_per_hz"])),
            num_antennas=int(d["num_antennas"]),
            arrival_rate=float(d["arrival_rate_packets_per_frame"]),
            delay_bound=int(d["delay_bound_frames"]),
            tx_delay=int(d["tx_delay_frames"]),
            dec_delay=int(d["dec_delay_frames"]),
            reliability=float(d["reliability"]),
            cell_min_d=float(d["cell_min_d_m"]),
            cell_max_d=float(d["cell_max_d_m"]),
        )


def _clean(x):
    # unit conversions are not exact in binary; 12 significant digits keeps dumps stable
    return float(f"{x:.12g}")


def path_loss_db(d):
    return 35.3 + 37.6 * np.log10(d)


def large_scale_gain(d):
    """Average channel power gain at distance ``d`` metres (path loss 35.3 + 37.6 lg d dB)."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise ValueError("distance must be positive")
    alpha = 10.0 ** (-path_loss_db(d_arr) / 10.0)
    return float(alpha) if np.ndim(d) == 0 else alpha


def distance_from_gain(alpha):
    return 10.0 ** ((-10.0 * np.log10(alpha) - 35.3) / 37.6)


def sample_small_scale(rng, num_antennas, size=None):
    """Maximum-ratio-combined Rayleigh power gain: sum of ``num_antennas`` Exp(1) draws.

    Equivalent to a Gamma(num_antennas, 1) variate.
    """
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    return rng.gamma(float(num_antennas), 1.0, size=size)


def q_function(z):
    """Gaussian tail probability Q(z) = P(N(0,1) > z)."""
    return 0.5 * erfc(np.asarray(z, dtype=float) / math.sqrt(2.0))


@lru_cache(maxsize=256)
def inv_q(p):
    """Inverse Gaussian Q-function by bisection on ``Q(z) = p``."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"inv_q needs 0 < p < 1, got {p}")
    lo, hi = -40.0, 40.0
    # Q is strictly decreasing; 100 halvings shrink the bracket below one ulp
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if q_function(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def qos_exponent(cfg):
    """Optimal QoS exponent ``-ln(eps/2) / (m * D_q)`` in 1/packet."""
    return -math.log(cfg.reliability / 2.0) / (cfg.arrival_rate * cfg.queue_delay_bound)


def snr_coefficient(alpha, g, cfg):
    """``alpha * g * P_max / N0`` in Hz: the bandwidth at which the SNR equals one."""
    return alpha * g * cfg.max_tx_power / cfg.noise_psd


def _rate_from_coeff(W, coeff, qinv, cfg):
    scale = cfg.ul_duration / (cfg.packet_size * LN2)
    s = scale * (W * np.log1p(coeff / W) - qinv * np.sqrt(W / cfg.ul_duration))
    return np.maximum(s, 0.0)


def _rate_grad_from_coeff(W, coeff, qinv, cfg):
    scale = cfg.ul_duration / (cfg.packet_size * LN2)
    bracket = np.log1p(coeff / W) - qinv / np.sqrt(cfg.ul_duration * W)
    grad = scale * (np.log1p(coeff / W) - coeff / (W + coeff)
                    - 0.5 * qinv / np.sqrt(cfg.ul_duration * W))
    return np.where(bracket > 0.0, grad, 0.0)


def achievable_rate(W, alpha, g, eps_c, cfg):
    """Finite-blocklength achievable rate in packets/frame, clamped at zero.

    Uses the high-SNR dispersion ``V = 1``, which lower-bounds the rate.
    Broadcasts over ``W``, ``alpha`` and ``g``.
    """
    return _rate_from_coeff(np.asarray(W, dtype=float), snr_coefficient(alpha, g, cfg),
                            inv_q(eps_c), cfg)


def rate_grad_w(W, alpha, g, eps_c, cfg):
    """Derivative of :func:`achievable_rate` with respect to ``W`` (per Hz); 0 where clamped."""
    return _rate_grad_from_coeff(np.asarray(W, dtype=float), snr_coefficient(alpha, g, cfg),
                                 inv_q(eps_c), cfg)


def constraint_value(W, alpha, theta, cfg, samples, eps_c=None):
    """Sample estimate of ``E_g[exp(-theta s)] - exp(-theta m)``; feasible iff <= 0.

    ``eps_c`` defaults to half of ``cfg.reliability``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("need at least one small-scale sample")
    if eps_c is None:
        eps_c = cfg.decoding_error
    s = achievable_rate(W, alpha, samples, eps_c, cfg)
    return float(np.mean(np.exp(-theta * s))) - math.exp(-theta * cfg.arrival_rate)


def effective_capacity(W, alpha, theta, cfg, samples, eps_c=None):
    """Effective capacity ``-(1/theta) ln E[exp(-theta s)]`` in packets/frame."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("need at least one small-scale sample")
    if not theta > 0:
        raise ValueError("theta must be positive")
    if eps_c is None:
        eps_c = cfg.decoding_error
    s = achievable_rate(W, alpha, samples, eps_c, cfg)
    return -math.log(float(np.mean(np.exp(-theta * s)))) / theta
