"""Saturated IEEE 802.11 DCF delay model (Bianchi slot model).

The model gives the mean duration of a generic slot for ``N`` overlapping
nodes, the stage distribution of a packet under a retry limit, and a single
access delay used as the link delay of the public ledger.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

# HE SU, 20 MHz, 1 spatial stream, 0.8 us GI. Rates in bits/s, MCS 0-11.
HE20_RATES_BPS = (
    8.6e6, 17.2e6, 25.8e6, 34.4e6, 51.6e6, 68.8e6,
    77.4e6, 86.0e6, 103.2e6, 114.7e6, 129.0e6, 143.4e6,
)


class DcfConvergenceError(RuntimeError):
    def __init__(self, n_nodes: int, residual: float, iterations: int):
        super().__init__(
            f"tau fixed point for N={n_nodes} did not converge after "
            f"{iterations} iterations (last residual {residual:.3e})"
        )
        self.n_nodes = n_nodes
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class DcfParams:
    cw_min: int = 16
    max_backoff_stage: int = 6
    r_max: int = 7
    mcs_index: int = 0
    empty_slot_us: float = 9.0
    sifs_us: float = 16.0
    difs_us: float = 34.0
    # legacy 6 Mb/s control framing: 20 us preamble + OFDM symbols of 4 us
    rts_us: float = 52.0
    cts_us: float = 44.0
    ack_us: float = 44.0
    phy_header_us: float = 44.0
    data_rate_bps: float = field(default=0.0)

    def __post_init__(self):
        if self.cw_min < 1:
            raise ValueError(f"cw_min must be >= 1, got {self.cw_min}")
        if self.max_backoff_stage < 0 or self.r_max < 0:
            raise ValueError("max_backoff_stage and r_max must be >= 0")
        if not 0 <= self.mcs_index < len(HE20_RATES_BPS):
            raise ValueError(f"mcs_index must be in 0..11, got {self.mcs_index}")
        for name in ("empty_slot_us", "sifs_us", "difs_us", "rts_us",
                     "cts_us", "ack_us", "phy_header_us"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.data_rate_bps == 0.0:
            object.__setattr__(self, "data_rate_bps", HE20_RATES_BPS[self.mcs_index])
        elif self.data_rate_bps < 0:
            raise ValueError("data_rate_bps must be > 0")

    def cw(self, stage: int) -> int:
        """Contention window at backoff ``stage``; frozen past the max stage."""
        return self.cw_min * 2 ** min(stage, self.max_backoff_stage)


@dataclass(frozen=True)
class DcfSolution:
    tau: float
    p_c: float
    p_slot_e: float
    p_slot_s: float
    p_slot_c: float
    t_slot_e: float
    t_slot_s: float
    t_slot_c: float
    expected_slot: float
    expected_backoff_slots: float

    @property
    def access_delay(self) -> float:
        return self.expected_backoff_slots * self.expected_slot + self.t_slot_s


def _tau_of_pc(p_c: float, params: DcfParams) -> float:
    # attempts per packet over slots spent per packet, stage w reached w.p. p_c**w
    num = 0.0
    den = 0.0
    pw = 1.0
    for w in range(params.r_max + 1):
        num += pw
        den += pw * (params.cw(w) + 1) / 2.0
        pw *= p_c
    return num / den


def solve_tau(n_nodes: int, params: DcfParams, tol: float = 1e-10,
              max_iter: int = 10_000, damping: float = 0.5) -> tuple[float, float]:
    """Solve the saturation fixed point ``tau = f(p_c)``, ``p_c = 1-(1-tau)^(N-1)``.

    Returns ``(tau, p_c)``. Raises :class:`DcfConvergenceError` when the damped
    iteration does not reach ``tol`` within ``max_iter`` steps.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if n_nodes == 1:
        return _tau_of_pc(0.0, params), 0.0

    tau = 2.0 / (params.cw_min + 1)
    residual = math.inf
    for _ in range(max_iter):
        p_c = 1.0 - (1.0 - tau) ** (n_nodes - 1)
        target = _tau_of_pc(p_c, params)
        residual = abs(target - tau)
        if residual < tol:
            return tau, p_c
        tau = damping * tau + (1.0 - damping) * target
    raise DcfConvergenceError(n_nodes, residual, max_iter)


def slot_probabilities(tau: float, n_nodes: int) -> tuple[float, float, float]:
    p_e = (1.0 - tau) ** n_nodes
    p_s = n_nodes * tau * (1.0 - tau) ** (n_nodes - 1)
    return p_e, p_s, 1.0 - p_e - p_s


def slot_durations(params: DcfParams, payload_bits: float) -> tuple[float, float, float]:
    """Durations in seconds of an empty, a successful and a collided slot."""
    if payload_bits <= 0:
        raise ValueError("payload_bits must be > 0")
    us = 1e-6
    t_data = params.phy_header_us * us + payload_bits / params.data_rate_bps
    t_e = params.empty_slot_us * us
    t_s = (params.rts_us + 3 * params.sifs_us + params.cts_us + params.ack_us) * us + t_data
    t_c = (params.rts_us + params.difs_us) * us
    return t_e, t_s, t_c


def expected_slot(probs, durations) -> float:
    p_e, p_s, p_c = probs
    t_e, t_s, t_c = durations
    return p_e * t_e + p_s * t_s + p_c * t_c


def stage_distribution(p_c: float, r_max: int) -> list[float]:
    """Probability that a packet ends its service in backoff stage w = 0..r_max."""
    if not 0.0 <= p_c < 1.0:
        raise ValueError(f"p_c must be in [0, 1), got {p_c}")
    if r_max < 0:
        raise ValueError("r_max must be >= 0")
    # p^w (1-p) / (1-p^(R+1)) written as p^w / sum p^k, which stays accurate as p -> 1
    weights = [p_c ** w for w in range(r_max + 1)]
    norm = math.fsum(weights)
    return [w / norm for w in weights]


def expected_backoff_slots(p_c: float, params: DcfParams) -> float:
    pi = stage_distribution(p_c, params.r_max)
    return sum(pi_w * (params.cw(w) - 1) / 2.0 for w, pi_w in enumerate(pi))


def solve(n_nodes: int, payload_bits: float, params: DcfParams) -> DcfSolution:
    tau, p_c = solve_tau(n_nodes, params)
    probs = slot_probabilities(tau, n_nodes)
    durations = slot_durations(params, payload_bits)
    return DcfSolution(
        tau=tau,
        p_c=p_c,
        p_slot_e=probs[0],
        p_slot_s=probs[1],
        p_slot_c=probs[2],
        t_slot_e=durations[0],
        t_slot_s=durations[1],
        t_slot_c=durations[2],
        expected_slot=expected_slot(probs, durations),
        expected_backoff_slots=expected_backoff_slots(p_c, params),
    )


def access_delay(n_nodes: int, payload_bits: float, params: DcfParams) -> float:
    """Mean time for one node among ``n_nodes`` to deliver ``payload_bits``.

    Expected final-stage backoff countdown in generic slots, plus one
    successful RTS/CTS/DATA/ACK exchange.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    return _cached_delay(n_nodes, float(payload_bits), params)


@lru_cache(maxsize=8192)
def _cached_delay(n_nodes: int, payload_bits: float, params: DcfParams) -> float:
    return solve(n_nodes, payload_bits, params).access_delay
