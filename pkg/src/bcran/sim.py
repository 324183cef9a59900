"""Event-driven RAN sharing scenario coupling the two ledgers and the market.

Every epoch each user redraws its demand and posts a service request on the
public ledger. Once confirmed, the request is settled by a service auction.
With dynamic sharing an operator whose awarded demand in a cell exceeds the
share it holds there posts a resource request on the private ledger; the
lease auction runs only after that request confirms.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import market as mk
from .config import SimConfig
from .events import EventQueue
from .ledger import Ledger, LedgerMetrics, Transaction, TxKind
from .streams import KeyedStream, stream_rng
from .topology import UserEquipment, build_hex_deployment, drop_users, sinr_matrix

Z95 = 1.959963984540054

SUMMARY_FIELDS = (
    "mean_capacity_bps", "mean_acceptance", "mean_ap_load", "mean_unserved",
    "awards", "rejected", "ran_requests", "leases",
    "public_mean_tc_s", "private_mean_tc_s",
)


@dataclass
class MetricsSeries:
    times: list = field(default_factory=list)
    capacity_bps: list = field(default_factory=list)
    mean_acceptance: list = field(default_factory=list)
    mean_ap_load: list = field(default_factory=list)
    n_unserved: list = field(default_factory=list)
    service_requests: int = 0
    awards: int = 0
    rejected: int = 0
    ran_requests: int = 0
    leases: int = 0
    award_log: list = field(default_factory=list)
    public: LedgerMetrics = field(default_factory=LedgerMetrics)
    private: LedgerMetrics = field(default_factory=LedgerMetrics)

    def __len__(self):
        return len(self.times)

    def summary(self) -> dict:
        def avg(xs):
            return float(np.mean(xs)) if len(xs) else 0.0
        return {
            "mean_capacity_bps": avg(self.capacity_bps),
            "mean_acceptance": avg(self.mean_acceptance),
            "mean_ap_load": avg(self.mean_ap_load),
            "mean_unserved": avg(self.n_unserved),
            "awards": self.awards,
            "rejected": self.rejected,
            "ran_requests": self.ran_requests,
            "leases": self.leases,
            "public_mean_tc_s": self.public.mean("confirmation_delays"),
            "private_mean_tc_s": self.private.mean("confirmation_delays"),
        }


def demand_epoch(users: Sequence[UserEquipment], rng: np.random.Generator, t: float = 0.0) -> np.ndarray:
    """Redraw every user's demand share uniformly within its profile range."""
    lo = np.array([u.profile.demand_range[0] for u in users])
    hi = np.array([u.profile.demand_range[1] for u in users])
    draws = rng.uniform(lo, hi) if len(users) else np.empty(0)
    for u, d in zip(users, draws):
        u.demand_share = float(d)
    return draws


def cell_ownership(config: SimConfig, seed: int) -> np.ndarray:
    """Fraction of each cell owned by each operator, shape (cells, operators)."""
    n_cells, n_ops = config.topology.num_cells, config.market.operators
    shares = np.zeros((n_cells, n_ops))
    own = config.market.ownership
    if own == "random":
        # one uniform per cell, so the same draw maps consistently across operator counts
        draws = KeyedStream(seed, "topology")
        for c in range(n_cells):
            shares[c, min(int(draws.uniform(c) * n_ops), n_ops - 1)] = 1.0
    else:
        shares[:] = np.asarray(own, dtype=float) / sum(own)
    return shares


class Scenario:
    """One replication: topology, users, market and both ledgers on one clock."""

    def __init__(self, config: SimConfig, seed: Optional[int] = None, sharing: Optional[bool] = None):
        self.config = config
        self.seed = config.run.seed if seed is None else int(seed)
        mc = config.market
        self.sharing = (mc.sharing == "dynamic") if sharing is None else bool(sharing)
        seed = self.seed

        topo = build_hex_deployment(config.topology.num_cells, config.topology.radius_m, config.radio)
        shares = cell_ownership(config, seed)
        self.topology = topo.with_owners(
            [int(np.argmax(row)) if row.sum() > 0 else 0 for row in shares])
        self.users = drop_users(self.topology, config.topology.num_users, stream_rng(seed, "topology"))
        self.sinr = sinr_matrix(self.topology, self.users)
        self.spectral_eff = np.log2(1.0 + self.sinr)

        self._demand_rng = stream_rng(seed, "demands")
        self._assign_profiles()
        market_rng = stream_rng(seed, "market")
        prices = market_rng.uniform(*mc.lease_price_range, size=mc.operators)
        self.market = mk.Market.from_ownership(
            mc.operators, shares, mc.slices_per_cell, prices,
            lease_duration_s=mc.lease_duration_s, sharing=self.sharing)
        self._auction_draws = KeyedStream(seed, "market")

        self.queue = EventQueue()
        self.trace: list = []
        self.public = Ledger(config.public, self.queue, seed, on_confirm=self._on_public_confirm, trace=self.trace)
        self.private = Ledger(config.private, self.queue, seed, on_confirm=self._on_private_confirm, trace=self.trace)
        self.series = MetricsSeries(public=self.public.metrics, private=self.private.metrics)
        self._tx_ids = {"public": 0, "private": 0}
        self._pending_ran: set = set()
        self._epoch = 0

    def _assign_profiles(self) -> None:
        mc = self.config.market
        rng = self._demand_rng
        n = len(self.users)
        if isinstance(mc.profile, str):
            names = [mc.profile] * n
        else:
            keys = [k for k, _ in mc.profile]
            w = np.array([v for _, v in mc.profile], dtype=float)
            names = [keys[i] for i in rng.choice(len(keys), size=n, p=w / w.sum())]
        psi = rng.uniform(*mc.psi_range, size=n)
        xi = rng.uniform(*mc.xi_range, size=n)
        for u, name, a, b in zip(self.users, names, psi, xi):
            base = mk.PROFILES[name]
            u.profile = dataclasses.replace(base, psi=float(a), xi=float(b))

    def _next_id(self, kind: str) -> int:
        i = self._tx_ids[kind]
        self._tx_ids[kind] = i + 1
        return i

    # -- event handlers ----------------------------------------------------
    def _on_epoch(self) -> None:
        now = self.queue.now
        demand_epoch(self.users, self._demand_rng, now)
        for u in self.users:
            req = mk.ServiceRequest(u.id, u.serving_cell, u.demand_share)
            tx = Transaction(self._next_id("public"), TxKind.SERVICE_REQUEST,
                             self.config.public.tx_bits, created_at=now, payload=(self._epoch, req))
            self.public.submit_transaction(tx)
            self.series.service_requests += 1
        self._epoch += 1
        if self.sharing:
            self._check_all_deficits()
        nxt = now + self.config.run.epoch_s
        if nxt < self.config.run.horizon_s:
            self.queue.schedule(nxt, self._on_epoch)

    def _on_public_confirm(self, tx: Transaction) -> None:
        epoch, req = tx.payload
        mc = self.config.market
        if mc.policy == "random_uniform":
            uniforms = (self._auction_draws.uniform(req.user, epoch, 0),
                        self._auction_draws.uniform(req.user, epoch, 1))
        else:
            uniforms = [self._auction_draws.uniform(req.user, epoch, 2 + m) for m in range(mc.operators)]
        award = mk.run_service_auction(
            req, self.market, mc.policy, uniforms, self.queue.now,
            bandwidth_hz=self.config.radio.bandwidth_hz, weights=mc.utility_weights)
        if award is None:
            self.market.drop_award(req.user)
            self.series.rejected += 1
            return
        self.users[req.user].operator = award.seller
        self.series.awards += 1
        self.series.award_log.append((tx.confirmed_at, tx.id, req.user, award.seller, award.price, award.requested_share))
        if self.sharing:
            self._check_deficit(award.seller, award.cell)

    def _check_all_deficits(self) -> None:
        for cell in self.market.cells():
            for op in self.market.operators:
                self._check_deficit(op.id, cell)

    def _check_deficit(self, operator: int, cell: int) -> None:
        if (operator, cell) in self._pending_ran:
            return
        req = mk.request_ran_resources(self.market, operator, cell, self.queue.now)
        if req is None:
            return
        self._pending_ran.add((operator, cell))
        tx = Transaction(self._next_id("private"), TxKind.RESOURCE_REQUEST,
                         self.config.private.tx_bits, created_at=self.queue.now, payload=req)
        self.private.submit_transaction(tx)
        self.series.ran_requests += 1

    def _on_private_confirm(self, tx: Transaction) -> None:
        if tx.kind is not TxKind.RESOURCE_REQUEST:
            return
        req = tx.payload
        self._pending_ran.discard((req.operator, req.cell))
        lease = mk.run_ran_auction(req, self.market, self.queue.now)
        if lease is None:
            return
        self.series.leases += 1
        record = Transaction(self._next_id("private"), TxKind.RESOURCE_LEASE,
                             self.config.private.tx_bits, created_at=self.queue.now, payload=lease)
        self.private.submit_transaction(record)
        self.queue.schedule(lease.expiry, self._on_lease_expiry, lease)
        self._check_deficit(req.operator, req.cell)

    def _on_lease_expiry(self, lease: mk.Lease) -> None:
        mk.expire_leases(self.market, self.queue.now)
        self._check_deficit(lease.lessee, lease.cell)

    def _on_sample(self) -> None:
        now = self.queue.now
        self.record(now)
        nxt = now + self.config.run.sample_s
        if nxt <= self.config.run.horizon_s + 1e-9:
            self.queue.schedule(nxt, self._on_sample)

    # -- metrics -----------------------------------------------------------
    def allocations(self) -> np.ndarray:
        shares = np.zeros(len(self.users))
        for buyer, b in self.market.allocations().items():
            shares[buyer] = b
        return shares

    def record(self, now: float) -> None:
        mc = self.config.market
        shares = self.allocations()
        cap = shares * self.config.radio.bandwidth_hz * self.spectral_eff
        acc = np.zeros(len(self.users))
        for buyer, award in self.market.awards.items():
            u = self.users[buyer]
            acc[buyer] = mk.service_acceptance(shares[buyer], award.price, u.profile.psi, u.profile.xi,
                                               mc.acceptance_c)
        load = np.zeros(self.topology.num_cells)
        cells = np.array([u.serving_cell for u in self.users], dtype=int)
        np.add.at(load, cells, shares)
        s = self.series
        s.times.append(now)
        s.capacity_bps.append(float(cap.sum()))
        s.mean_acceptance.append(float(acc.mean()) if len(acc) else 0.0)
        s.mean_ap_load.append(float(np.clip(load, 0.0, 1.0).mean()))
        s.n_unserved.append(int(np.count_nonzero(shares <= 0)))

    def run(self) -> MetricsSeries:
        horizon = self.config.run.horizon_s
        if horizon > 0:
            self.queue.schedule(0.0, self._on_epoch)
            self.queue.schedule(min(self.config.run.sample_s, horizon), self._on_sample)
            self.queue.run(until=horizon)
        return self.series


def run_scenario(config: SimConfig, seed: Optional[int] = None, sharing: Optional[bool] = None) -> MetricsSeries:
    return Scenario(config, seed, sharing).run()


@dataclass
class PairedResult:
    seeds: list
    static: list
    dynamic: list

    def deltas(self, metric: str) -> np.ndarray:
        return np.array([d.summary()[metric] - s.summary()[metric] for s, d in zip(self.static, self.dynamic)])

    def sign_consistency(self, metric: str) -> float:
        """Fraction of seeds where dynamic is at least as good as static."""
        return float(np.mean(self.deltas(metric) >= 0))


def compare_static_dynamic(config: SimConfig, seeds: Iterable[int]) -> PairedResult:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    static = [run_scenario(config, s, sharing=False) for s in seeds]
    dynamic = [run_scenario(config, s, sharing=True) for s in seeds]
    return PairedResult(seeds, static, dynamic)


@dataclass(frozen=True)
class Estimate:
    mean: float
    ci_low: float
    ci_high: float
    n: int

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2


def aggregate_metrics(series_list: Sequence) -> dict[str, Estimate]:
    """Mean and 95% normal-approximation CI per metric across replications.

    Items may be :class:`MetricsSeries` or plain ``{metric: value}`` dicts. A
    single replication gets a zero-width interval.
    """
    if not series_list:
        raise ValueError("need at least one series")
    rows = [s.summary() if isinstance(s, MetricsSeries) else dict(s) for s in series_list]
    out = {}
    for key in rows[0]:
        x = np.array([r[key] for r in rows], dtype=float)
        mean = float(x.mean())
        if len(x) > 1 and np.all(np.isfinite(x)):
            hw = Z95 * float(x.std(ddof=1)) / math.sqrt(len(x))
        else:
            hw = 0.0
        out[key] = Estimate(mean, mean - hw, mean + hw, len(x))
    return out
