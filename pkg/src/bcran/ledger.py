"""Discrete-event blockchain pipeline shared by the public and private ledgers.

A transaction is uploaded over the ledger's link, waits in the mempool, is
packed into a block when the block is full or the waiting timer expires, is
mined (exponential time at rate ``mu``) and propagated. On the public ledger a
propagated block is orphaned with probability ``1 - exp(-mu * T_prop)``, in
which case its transactions go back to the head of the mempool and repeat
the queue, mine and propagate steps.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from . import dcf
from .events import EventQueue
from .streams import KeyedStream, stream_rng


class TxKind(str, enum.Enum):
    SERVICE_REQUEST = "service_request"
    SERVICE_AWARD = "service_award"
    RESOURCE_REQUEST = "resource_request"
    RESOURCE_LEASE = "resource_lease"


class BlockStatus(str, enum.Enum):
    PENDING = "pending"
    APPENDED = "appended"
    ORPHANED = "orphaned"


class DuplicateTransactionError(ValueError):
    pass


@dataclass(eq=False)
class Transaction:
    id: int
    kind: TxKind = TxKind.SERVICE_REQUEST
    size_bits: int = 3000
    created_at: float = 0.0
    uploaded_at: Optional[float] = None
    confirmed_at: Optional[float] = None
    payload: Any = None
    attempts: int = 0
    mempool_since: Optional[float] = None

    def __post_init__(self):
        if self.size_bits <= 0:
            raise ValueError("size_bits must be > 0")


@dataclass(eq=False)
class Block:
    id: int
    parent: Optional[int]
    transactions: list
    header_bits: int
    formed_at: float
    mining_started_at: Optional[float] = None
    mined_at: Optional[float] = None
    propagated_at: Optional[float] = None
    status: BlockStatus = BlockStatus.PENDING

    @property
    def payload_bits(self) -> int:
        return sum(tx.size_bits for tx in self.transactions)

    @property
    def total_bits(self) -> int:
        return self.header_bits + self.payload_bits


@dataclass(frozen=True)
class LinkModel:
    """Either a fixed latency or an 802.11 DCF contention delay.

    ``contenders`` is the upload contender count for the DCF variant: an
    integer, or ``"inflight"`` for the uploads in progress plus the new one.
    """
    variant: str = "constant"
    delay_s: float = 0.010
    dcf_params: dcf.DcfParams = field(default_factory=dcf.DcfParams)
    contenders: Union[int, str] = "inflight"

    def __post_init__(self):
        if self.variant not in ("constant", "dcf"):
            raise ValueError(f"unknown link variant {self.variant!r}")
        if self.delay_s < 0:
            raise ValueError("constant delay must be >= 0")
        if not (self.contenders == "inflight" or (isinstance(self.contenders, int) and self.contenders >= 1)):
            raise ValueError("contenders must be 'inflight' or a positive integer")

    @classmethod
    def constant(cls, delay_s: float = 0.010) -> "LinkModel":
        return cls("constant", delay_s=delay_s)

    @classmethod
    def wifi(cls, params: Optional[dcf.DcfParams] = None, contenders: Union[int, str] = "inflight") -> "LinkModel":
        return cls("dcf", dcf_params=params or dcf.DcfParams(), contenders=contenders)

    def delay(self, payload_bits: float, n_contenders: int) -> float:
        if self.variant == "constant":
            return self.delay_s
        return dcf.access_delay(n_contenders, payload_bits, self.dcf_params)


@dataclass(frozen=True)
class LedgerConfig:
    kind: str = "public"
    block_size_bits: int = 15_000
    max_wait_s: float = 5.0
    mining_rate: float = 10.0
    link: LinkModel = field(default_factory=LinkModel.wifi)
    n_peers: int = 10
    header_bits: int = 1_000
    tx_bits: int = 3_000

    def __post_init__(self):
        if self.kind not in ("public", "private"):
            raise ValueError(f"ledger kind must be public or private, got {self.kind!r}")
        if self.tx_bits <= 0:
            raise ValueError("tx_bits must be > 0")
        if self.block_size_bits < self.tx_bits:
            raise ValueError(
                f"block_size_bits={self.block_size_bits} cannot hold a {self.tx_bits}-bit transaction")
        if not self.mining_rate > 0:
            raise ValueError("mining_rate must be > 0")
        if not self.max_wait_s > 0:
            raise ValueError("max_wait_s must be > 0")
        if self.n_peers < 1 or self.header_bits < 0:
            raise ValueError("n_peers must be >= 1 and header_bits >= 0")

    @property
    def forks_enabled(self) -> bool:
        return self.kind == "public"

    @classmethod
    def public(cls, **kw) -> "LedgerConfig":
        kw.setdefault("link", LinkModel.wifi())
        return cls(kind="public", **kw)

    @classmethod
    def private(cls, **kw) -> "LedgerConfig":
        kw.setdefault("link", LinkModel.constant(0.010))
        return cls(kind="private", **kw)


@dataclass
class LedgerMetrics:
    confirmation_delays: list = field(default_factory=list)
    upload_delays: list = field(default_factory=list)
    # one entry per (transaction, block attempt), retries included
    queue_delays: list = field(default_factory=list)
    mining_delays: list = field(default_factory=list)
    prop_delays: list = field(default_factory=list)
    # one entry per propagated block
    block_prop_delays: list = field(default_factory=list)
    block_tx_counts: list = field(default_factory=list)
    blocks_appended: int = 0
    blocks_orphaned: int = 0
    bits_transmitted: int = 0
    header_bits_transmitted: int = 0
    payload_bits_confirmed: int = 0
    n_submitted: int = 0
    n_confirmed: int = 0

    @property
    def forks(self) -> int:
        return self.blocks_orphaned

    @property
    def blocks_mined(self) -> int:
        return self.blocks_appended + self.blocks_orphaned

    @property
    def fork_rate(self) -> float:
        return self.blocks_orphaned / self.blocks_mined if self.blocks_mined else 0.0

    @property
    def attempts_per_tx(self) -> float:
        return len(self.queue_delays) / self.n_confirmed if self.n_confirmed else float("nan")

    def mean(self, name: str) -> float:
        values = getattr(self, name)
        return float(np.mean(values)) if len(values) else float("nan")


def fork_probability(mu: float, t_prop: float) -> float:
    if not mu > 0 or t_prop < 0:
        raise ValueError("need mu > 0 and t_prop >= 0")
    return -math.expm1(-mu * t_prop)


def sample_mining_time(rng: np.random.Generator, mu: float, size=None):
    if not mu > 0:
        raise ValueError("mu must be > 0")
    return rng.exponential(1.0 / mu, size)


def analytic_confirmation_delay(t_up: float, t_queue: float, t_mine: float,
                                t_prop: float, p_fork: float) -> float:
    if not 0.0 <= p_fork < 1.0:
        raise ValueError(f"p_fork must be in [0, 1), got {p_fork}")
    return t_up + (t_queue + t_mine + t_prop) / (1.0 - p_fork)


def overhead_ratio(metrics: LedgerMetrics) -> float:
    """Share of propagated bits that are not confirmed transaction payload.

    Headers of every block and full payloads of orphaned blocks count as
    overhead.
    """
    total = metrics.bits_transmitted
    if total <= 0:
        raise ValueError("no bits transmitted")
    return (total - metrics.payload_bits_confirmed) / total


def fork_free_overhead(header_bits: float, txs_per_block: float, tx_bits: float) -> float:
    return header_bits / (header_bits + txs_per_block * tx_bits)


class Ledger:
    """One ledger instance driven by a shared :class:`EventQueue`."""

    def __init__(self, config: LedgerConfig, queue: EventQueue, seed: int = 0,
                 on_confirm: Optional[Callable[[Transaction], None]] = None,
                 trace: Optional[list] = None):
        self.config = config
        self.queue = queue
        self.on_confirm = on_confirm
        self.trace = trace
        self.metrics = LedgerMetrics()
        self.mempool: deque = deque()
        self._pending_bits = 0
        self._draws = KeyedStream(seed, f"ledger-{config.kind}")
        self._submitted: set = set()
        self._inflight_uploads = 0
        self._miner_busy = False
        self._last_formed_at = -math.inf
        self._timer_at: Optional[float] = None
        self._block_ids = 0
        self.tip: Optional[int] = None

    # -- step 1: upload ------------------------------------------------------
    def submit_transaction(self, tx: Transaction, now: Optional[float] = None) -> float:
        """Start uploading ``tx``; returns the time it reaches the mempool."""
        now = self.queue.now if now is None else now
        if tx.id in self._submitted:
            raise DuplicateTransactionError(f"transaction {tx.id} already submitted")
        if tx.size_bits > self.config.block_size_bits:
            raise ValueError(
                f"transaction {tx.id} ({tx.size_bits} bits) exceeds block size {self.config.block_size_bits}")
        self._submitted.add(tx.id)
        link = self.config.link
        contenders = self._inflight_uploads + 1 if link.contenders == "inflight" else link.contenders
        tx.uploaded_at = now + link.delay(tx.size_bits, contenders)
        self._inflight_uploads += 1
        self.metrics.n_submitted += 1
        self.queue.schedule(tx.uploaded_at, self._on_uploaded, tx)
        return tx.uploaded_at

    def _on_uploaded(self, tx: Transaction) -> None:
        self._inflight_uploads -= 1
        self._log("upload", tx.id)
        self.metrics.upload_delays.append(tx.uploaded_at - tx.created_at)
        self._enqueue(tx)
        self._kick()

    def _enqueue(self, tx: Transaction, head: bool = False) -> None:
        tx.mempool_since = self.queue.now
        if head:
            self.mempool.appendleft(tx)
        else:
            self.mempool.append(tx)
        self._pending_bits += tx.size_bits

    # -- step 2: block formation ---------------------------------------------
    def timer_deadline(self) -> Optional[float]:
        if not self.mempool:
            return None
        oldest = min(tx.mempool_since for tx in self.mempool)
        return max(oldest, self._last_formed_at) + self.config.max_wait_s

    def try_form_block(self, now: Optional[float] = None) -> Optional[Block]:
        """Pack a block if the mempool fills one or the timer has expired."""
        now = self.queue.now if now is None else now
        if not self.mempool:
            return None
        cap = self.config.block_size_bits
        if self._pending_bits < cap:
            if now < self.timer_deadline():
                return None
        txs, bits = [], 0
        while self.mempool and bits + self.mempool[0].size_bits <= cap:
            tx = self.mempool.popleft()
            bits += tx.size_bits
            txs.append(tx)
        self._pending_bits -= bits
        self._last_formed_at = now
        block = Block(self._block_ids, self.tip, txs, self.config.header_bits, formed_at=now)
        self._block_ids += 1
        return block

    def _kick(self) -> None:
        if self._miner_busy:
            return
        block = self.try_form_block()
        if block is not None:
            self._start_mining(block)
            return
        deadline = self.timer_deadline()
        if deadline is not None and deadline != self._timer_at:
            self._timer_at = deadline
            self.queue.schedule(deadline, self._on_timer, deadline)

    def _on_timer(self, deadline: float) -> None:
        if deadline == self._timer_at:
            self._timer_at = None
            self._kick()

    # -- step 3: mining ------------------------------------------------------
    def _block_key(self, block: Block) -> tuple:
        head = block.transactions[0]
        return head.id, head.attempts

    def _start_mining(self, block: Block) -> None:
        self._miner_busy = True
        now = self.queue.now
        block.mining_started_at = now
        for tx in block.transactions:
            self.metrics.queue_delays.append(now - tx.mempool_since)
        t_mine = self._draws.exponential(self.config.mining_rate, *self._block_key(block), 0)
        self._log("form", block.id, len(block.transactions))
        self.queue.schedule(now + t_mine, self._on_mined, block)

    def _on_mined(self, block: Block) -> None:
        now = self.queue.now
        block.mined_at = now
        self._miner_busy = False
        self._log("mined", block.id)
        self.queue.schedule(now + self.propagation_delay(block), self._on_propagated, block)
        self._kick()

    # -- step 4: propagation and forks ---------------------------------------
    def propagation_delay(self, block: Block) -> float:
        return self.config.link.delay(block.total_bits, self.config.n_peers)

    def resolve_fork(self, block: Block, u: Optional[float] = None) -> BlockStatus:
        if not self.config.forks_enabled:
            return BlockStatus.APPENDED
        t_prop = block.propagated_at - block.mined_at
        p_fork = fork_probability(self.config.mining_rate, t_prop)
        if u is None:
            u = self._draws.uniform(*self._block_key(block), 1)
        return BlockStatus.ORPHANED if u < p_fork else BlockStatus.APPENDED

    def _on_propagated(self, block: Block) -> None:
        now = self.queue.now
        block.propagated_at = now
        m = self.metrics
        t_mine = block.mined_at - block.mining_started_at
        t_prop = now - block.mined_at
        m.block_prop_delays.append(t_prop)
        m.block_tx_counts.append(len(block.transactions))
        m.bits_transmitted += block.total_bits
        m.header_bits_transmitted += block.header_bits
        for _ in block.transactions:
            m.mining_delays.append(t_mine)
            m.prop_delays.append(t_prop)
        block.status = self.resolve_fork(block)
        self._log(block.status.value, block.id)
        if block.status is BlockStatus.ORPHANED:
            m.blocks_orphaned += 1
            for tx in reversed(block.transactions):
                tx.attempts += 1
                self._enqueue(tx, head=True)
            self._kick()
            return
        m.blocks_appended += 1
        self.tip = block.id
        for tx in block.transactions:
            tx.attempts += 1
            tx.confirmed_at = now
            m.n_confirmed += 1
            m.payload_bits_confirmed += tx.size_bits
            m.confirmation_delays.append(now - tx.created_at)
            if self.on_confirm is not None:
                self.on_confirm(tx)

    def _log(self, event: str, *ids) -> None:
        if self.trace is not None:
            self.trace.append((self.queue.now, self.config.kind, event) + ids)


def simulate_ledger(config: LedgerConfig, arrival_rate: float, n_tx: int, seed: int = 0,
                    trace: Optional[list] = None) -> LedgerMetrics:
    """Poisson(``arrival_rate``) arrivals of ``n_tx`` transactions, run until all confirm."""
    if not arrival_rate > 0:
        raise ValueError("arrival_rate must be > 0")
    queue = EventQueue()
    ledger = Ledger(config, queue, seed=seed, trace=trace)
    rng = stream_rng(seed, "arrivals")
    gaps = rng.exponential(1.0 / arrival_rate, n_tx)

    def arrive(i: int) -> None:
        tx = Transaction(i, size_bits=config.tx_bits, created_at=queue.now)
        ledger.submit_transaction(tx)
        if i + 1 < n_tx:
            queue.schedule(queue.now + gaps[i + 1], arrive, i + 1)

    if n_tx > 0:
        queue.schedule(gaps[0], arrive, 0)
    queue.run()
    return ledger.metrics
