"""Reverse auctions for user services and for inter-operator RAN leases."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

UNIT_EPS = 1e-9


@dataclass(frozen=True)
class UserProfile:
    name: str
    demand_range: tuple[float, float]
    psi: float = 0.1
    xi: float = 0.1

    def __post_init__(self):
        lo, hi = self.demand_range
        if not 0 < lo <= hi < 1:
            raise ValueError(f"profile {self.name}: demand range must lie in (0, 1), got {self.demand_range}")


PROFILES = {
    "low": UserProfile("low", (0.001, 0.01)),
    "average": UserProfile("average", (0.005, 0.02)),
    "high": UserProfile("high", (0.01, 0.025)),
}


@dataclass
class ResourceUnit:
    cell: int
    slice: int
    owner: int
    share: float
    holder: Optional[int] = None
    lease_expiry: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.share <= 1:
            raise ValueError("unit share must be in (0, 1]")
        if self.holder is None:
            self.holder = self.owner

    @property
    def id(self) -> tuple[int, int]:
        return self.cell, self.slice

    @property
    def leased(self) -> bool:
        return self.lease_expiry is not None


@dataclass
class Operator:
    id: int
    lease_price: float = 0.5
    owned_resources: list = field(default_factory=list)

    def __post_init__(self):
        if self.lease_price < 0:
            raise ValueError("lease_price must be >= 0")


@dataclass(frozen=True)
class Bid:
    seller: int
    features: tuple[float, ...]
    price: float = 0.0


@dataclass
class Award:
    buyer: int
    seller: int
    price: float
    cell: int
    requested_share: float
    allocated_share: float
    bandwidth_hz: float
    start: float
    duration: Optional[float] = None

    @property
    def sla(self) -> dict:
        return {"demand_share": self.requested_share}


@dataclass(frozen=True)
class ServiceRequest:
    user: int
    cell: int
    demand_share: float


@dataclass(frozen=True)
class RanRequest:
    operator: int
    cell: int
    needed_share: float
    created_at: float


@dataclass
class Lease:
    supplier: int
    lessee: int
    cell: int
    units: list
    price: float
    start: float
    expiry: float

    @property
    def share(self) -> float:
        return sum(u.share for u in self.units)


def buyer_utility(weights: Sequence[float], bids: Sequence[Bid]) -> tuple[int, float]:
    """Index of the bid maximizing the weighted feature sum, and that sum.

    Exact ties go to the lowest seller id.
    """
    if not bids:
        raise ValueError("no bids")
    w = np.asarray(weights, dtype=float)
    if np.any((w < 0) | (w > 1)):
        raise ValueError("weights must lie in [0, 1]")
    k = len(bids[0].features)
    if len(w) != k or any(len(b.features) != k for b in bids):
        raise ValueError("every bid needs one feature per weight")
    scores = np.array([b.features for b in bids], dtype=float) @ w
    best = scores.max()
    tied = np.flatnonzero(scores == best)
    winner = min(tied, key=lambda i: (bids[i].seller, i))
    return int(winner), float(best)


def service_acceptance(b: float, p: float, psi: float, xi: float, C: float = 5.0) -> float:
    if b < 0 or p < 0:
        raise ValueError("allocated share and price must be non-negative")
    if not C > 0:
        raise ValueError("C must be > 0")
    if p == 0 and xi < 0:
        return 1.0
    return -math.expm1(-C * b ** psi * p ** xi)


class Market:
    """Operators, resource units and active service awards of one scenario."""

    def __init__(self, operators: Sequence[Operator], units: Sequence[ResourceUnit],
                 lease_duration_s: float = 10.0, sharing: bool = True):
        self.operators = list(operators)
        self.units = {u.id: u for u in units}
        self.lease_duration_s = lease_duration_s
        self.sharing = sharing
        self.awards: dict[int, Award] = {}
        self.leases: list[Lease] = []
        self._by_cell: dict[int, list[ResourceUnit]] = {}
        for u in units:
            self._by_cell.setdefault(u.cell, []).append(u)
        for op in self.operators:
            op.owned_resources = [u.id for u in units if u.owner == op.id]
        self._demand: dict[tuple[int, int], float] = {}
        self._held: dict[tuple[int, int], float] = {}
        for cell in self._by_cell:
            self.recount(cell)

    @classmethod
    def from_ownership(cls, n_operators: int, cell_owner_shares: np.ndarray, slices_per_cell: int,
                       lease_prices: Sequence[float], **kw) -> "Market":
        """``cell_owner_shares[c, m]`` is the fraction of cell ``c`` owned by operator ``m``."""
        units = []
        for c, shares in enumerate(np.asarray(cell_owner_shares, dtype=float)):
            counts = split_slices(shares, slices_per_cell)
            s = 0
            for m, n in enumerate(counts):
                for _ in range(n):
                    units.append(ResourceUnit(c, s, m, 1.0 / slices_per_cell))
                    s += 1
        ops = [Operator(m, float(lease_prices[m])) for m in range(n_operators)]
        return cls(ops, units, **kw)

    def cells(self):
        return sorted(self._by_cell)

    def cell_units(self, cell: int) -> list[ResourceUnit]:
        return self._by_cell.get(cell, [])

    def recount(self, cell: int) -> None:
        """Refresh cached holdings of ``cell`` after a holder change."""
        for key in [k for k in self._held if k[1] == cell]:
            del self._held[key]
        for u in self.cell_units(cell):
            key = (u.holder, cell)
            self._held[key] = self._held.get(key, 0.0) + u.share

    def held_share(self, operator: int, cell: int) -> float:
        return self._held.get((operator, cell), 0.0)

    def held_resources(self, operator: int) -> list[tuple[tuple[int, int], Optional[float]]]:
        return [(u.id, u.lease_expiry) for u in self.units.values() if u.holder == operator]

    def demand(self, operator: int, cell: int) -> float:
        return self._demand.get((operator, cell), 0.0)

    def free_share(self, operator: int, cell: int) -> float:
        return max(0.0, self.held_share(operator, cell) - self.demand(operator, cell))

    def deficit(self, operator: int, cell: int) -> float:
        return max(0.0, self.demand(operator, cell) - self.held_share(operator, cell))

    def eligible(self, operator: int, cell: int) -> bool:
        if self.sharing:
            return bool(self.cell_units(cell))
        return self.held_share(operator, cell) > 0

    # -- service awards ----------------------------------------------------
    def set_award(self, award: Award) -> None:
        self.drop_award(award.buyer)
        award.allocated_share = min(award.requested_share, self.free_share(award.seller, award.cell))
        self.awards[award.buyer] = award
        key = (award.seller, award.cell)
        self._demand[key] = self._demand.get(key, 0.0) + award.requested_share

    def drop_award(self, buyer: int) -> Optional[Award]:
        old = self.awards.pop(buyer, None)
        if old is not None:
            key = (old.seller, old.cell)
            self._demand[key] = max(0.0, self._demand[key] - old.requested_share)
        return old

    def allocations(self) -> dict[int, float]:
        """Allocated share per buyer, scaled down where a seller is oversubscribed."""
        scale = {}
        for key, d in self._demand.items():
            held = self.held_share(*key)
            scale[key] = 1.0 if d <= held + UNIT_EPS else (held / d if d > 0 else 0.0)
        return {b: a.requested_share * scale[(a.seller, a.cell)] for b, a in self.awards.items()}

    # -- leases ------------------------------------------------------------
    def lendable_units(self, supplier: int, cell: int) -> list[ResourceUnit]:
        """Owned, currently unleased units the supplier can spare given its own demand."""
        own = [u for u in self.cell_units(cell) if u.owner == supplier and u.holder == supplier]
        if not own:
            return []
        spare = self.held_share(supplier, cell) - self.demand(supplier, cell)
        n = int(math.floor(spare / own[0].share + UNIT_EPS))
        n = max(0, min(n, len(own)))
        return own[len(own) - n:]

    def check_conservation(self) -> None:
        for cell, units in self._by_cell.items():
            total = sum(u.share for u in units)
            if abs(total - 1.0) > 1e-9:
                raise AssertionError(f"cell {cell} shares sum to {total}")
            for u in units:
                if u.holder is None or (u.lease_expiry is None and u.holder != u.owner):
                    raise AssertionError(f"unit {u.id} has an inconsistent holder")


def split_slices(shares: Sequence[float], n_slices: int) -> list[int]:
    """Largest-remainder split of ``n_slices`` by ownership ``shares``."""
    shares = np.asarray(shares, dtype=float)
    if np.any(shares < 0) or shares.sum() <= 0:
        raise ValueError("ownership shares must be non-negative with a positive sum")
    quota = shares / shares.sum() * n_slices
    counts = np.floor(quota + 1e-12).astype(int)
    rest = n_slices - counts.sum()
    order = sorted(range(len(shares)), key=lambda m: (-(quota[m] - counts[m]), m))
    for m in order[:rest]:
        counts[m] += 1
    return counts.tolist()


def service_bids(market: Market, request: ServiceRequest, prices: Sequence[float]) -> list[Bid]:
    """Bids of every eligible operator: features are (1 - price, free share in cell)."""
    bids = []
    for op in market.operators:
        if market.eligible(op.id, request.cell):
            price = float(prices[op.id])
            bids.append(Bid(op.id, (1.0 - price, market.free_share(op.id, request.cell)), price))
    return bids


def run_service_auction(request: ServiceRequest, market: Market, policy: str, uniforms: Sequence[float],
                        now: float, bandwidth_hz: float = 20e6, weights: Sequence[float] = (1.0, 0.0),
                        duration: Optional[float] = None) -> Optional[Award]:
    """Settle one user request; ``None`` means the request is rejected.

    ``uniforms`` are the random inputs of this auction: for ``random_uniform``
    the first picks the operator the user subscribes to and the second its
    price; for ``utility`` one per operator gives that operator's price.
    """
    n_ops = len(market.operators)
    if n_ops == 0:
        return None
    if policy == "random_uniform":
        seller = min(int(uniforms[0] * n_ops), n_ops - 1)
        price = float(uniforms[1])
        if not market.eligible(seller, request.cell):
            return None
    elif policy == "utility":
        bids = service_bids(market, request, uniforms)
        if not bids:
            return None
        i, _ = buyer_utility(weights, bids)
        seller, price = bids[i].seller, bids[i].price
    else:
        raise ValueError(f"unknown service policy {policy!r}")
    award = Award(request.user, seller, price, request.cell, request.demand_share,
                  0.0, 0.0, now, duration)
    market.set_award(award)
    award.bandwidth_hz = award.allocated_share * bandwidth_hz
    return award


def request_ran_resources(market: Market, operator: int, cell: int, now: float) -> Optional[RanRequest]:
    """A resource request for the operator's deficit in ``cell``, if it has one."""
    needed = market.deficit(operator, cell)
    if needed <= UNIT_EPS:
        return None
    return RanRequest(operator, cell, needed, now)


def run_ran_auction(request: RanRequest, market: Market, now: float) -> Optional[Lease]:
    """Lease spare units in the requested cell from the cheapest fixed-price supplier."""
    needed = market.deficit(request.operator, request.cell)
    if needed <= UNIT_EPS:
        return None
    offers = []
    for op in market.operators:
        if op.id == request.operator:
            continue
        units = market.lendable_units(op.id, request.cell)
        if units:
            offers.append((op.lease_price, op.id, units))
    if not offers:
        return None
    price, supplier, units = min(offers, key=lambda o: (o[0], o[1]))
    n = min(len(units), int(math.ceil(needed / units[0].share - UNIT_EPS)))
    chosen = units[:n]
    expiry = now + market.lease_duration_s
    for u in chosen:
        u.holder = request.operator
        u.lease_expiry = expiry
    market.recount(request.cell)
    lease = Lease(supplier, request.operator, request.cell, chosen, price, now, expiry)
    market.leases.append(lease)
    return lease


def expire_leases(market: Market, now: float) -> list[ResourceUnit]:
    reverted = []
    for u in market.units.values():
        if u.lease_expiry is not None and u.lease_expiry <= now:
            u.holder = u.owner
            u.lease_expiry = None
            reverted.append(u)
    for cell in sorted({u.cell for u in reverted}):
        market.recount(cell)
    if reverted:
        market.leases = [l for l in market.leases if l.expiry > now]
    return reverted
