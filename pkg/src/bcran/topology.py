"""Hexagonal deployment, user drops, path loss, SINR and Shannon capacity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

THERMAL_NOISE_DBM_HZ = -174.0


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = 20.0
    pl0_db: float = 5.0
    alpha: float = 4.4
    sigma_db: float = 9.5
    gamma_db: float = 30.0
    bandwidth_hz: float = 20e6
    carrier_hz: float = 5e9
    noise_figure_db: float = 7.0
    noise_dbm: Optional[float] = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.bandwidth_hz > 0:
            raise ValueError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if self.noise_dbm is None:
            noise = THERMAL_NOISE_DBM_HZ + 10 * math.log10(self.bandwidth_hz) + self.noise_figure_db
            object.__setattr__(self, "noise_dbm", noise)
        for name in ("tx_power_dbm", "pl0_db", "sigma_db", "gamma_db", "noise_dbm"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class Cell:
    id: int
    center: tuple[float, float]
    radius: float
    owner: int = 0


@dataclass(frozen=True)
class Topology:
    cells: tuple[Cell, ...]
    params: RadioParams = field(default_factory=RadioParams)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.cells], dtype=float)

    def with_owners(self, owners: Sequence[int]) -> "Topology":
        if len(owners) != self.num_cells:
            raise ValueError("need one owner per cell")
        cells = tuple(Cell(c.id, c.center, c.radius, int(o)) for c, o in zip(self.cells, owners))
        return Topology(cells, self.params)


@dataclass
class UserEquipment:
    id: int
    position: tuple[float, float]
    serving_cell: Optional[int] = None
    operator: Optional[int] = None
    demand_share: float = 0.0
    profile: Optional[object] = None


def rings_for(num_cells: int) -> int:
    """Number of complete hex rings around the center giving ``num_cells``."""
    k = 0
    while 1 + 3 * k * (k + 1) < num_cells:
        k += 1
    if 1 + 3 * k * (k + 1) != num_cells:
        valid = ", ".join(str(1 + 3 * j * (j + 1)) for j in range(5))
        raise ValueError(
            f"num_cells={num_cells} is not a complete hexagonal layout; "
            f"use one of {valid}, ..."
        )
    return k


def build_hex_deployment(num_cells: int = 19, radius: float = 10.0,
                         params: Optional[RadioParams] = None) -> Topology:
    """Center cell plus complete rings; adjacent centers are sqrt(3)*radius apart."""
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    k = rings_for(num_cells)
    params = params or RadioParams()
    coords = []
    for ring in range(k + 1):
        if ring == 0:
            coords.append((0, 0))
            continue
        # walk the ring in axial coordinates, starting from the "south-west" corner
        q, r = -ring, ring
        for dq, dr in ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)):
            for _ in range(ring):
                coords.append((q, r))
                q, r = q + dq, r + dr
    spacing = math.sqrt(3.0) * radius
    cells = tuple(
        Cell(i, (spacing * (q + r / 2.0), spacing * (math.sqrt(3.0) / 2.0) * r), radius)
        for i, (q, r) in enumerate(coords)
    )
    return Topology(cells, params)


def drop_users(topology: Topology, n: int, rng_seed) -> list[UserEquipment]:
    """Drop ``n`` users uniformly over the union of the cell disks.

    Users land in a cell chosen uniformly (all disks have equal area) at a
    uniform point of its disk, then attach to the nearest cell center.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if n == 0:
        return []
    centers = topology.centers
    radius = np.array([c.radius for c in topology.cells])
    # rejection over the union: overlapping lenses must not be double counted
    pts = np.empty((0, 2))
    while len(pts) < n:
        m = 2 * (n - len(pts)) + 8
        cell = rng.integers(0, topology.num_cells, size=m)
        rho = radius[cell] * np.sqrt(rng.random(m))
        theta = 2 * np.pi * rng.random(m)
        cand = centers[cell] + np.column_stack((rho * np.cos(theta), rho * np.sin(theta)))
        # accept only if the drawing cell is the lowest-index disk covering the point
        d = np.linalg.norm(cand[:, None, :] - centers[None, :, :], axis=2)
        first_cover = np.argmax(d <= radius[None, :], axis=1)
        pts = np.vstack((pts, cand[first_cover == cell]))
    pts = pts[:n]
    serving = nearest_cells(topology, pts)
    return [
        UserEquipment(i, (float(x), float(y)), int(s))
        for i, ((x, y), s) in enumerate(zip(pts, serving))
    ]


def nearest_cells(topology: Topology, points: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(np.asarray(points)[:, None, :] - topology.centers[None, :, :], axis=2)
    return np.argmin(d, axis=1)


def path_loss_db(distance, params: RadioParams):
    """Loss in dB at ``distance`` meters. Accepts scalars or arrays."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    pl = (params.pl0_db + 10 * params.alpha * np.log10(d)
          + params.sigma_db / 2 + (d / 10) * (params.gamma_db / 2))
    return float(pl) if pl.ndim == 0 else pl


def received_power_dbm(distance, params: RadioParams):
    return params.tx_power_dbm - path_loss_db(distance, params)


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm) / 10.0)


def _distance(a, b) -> float:
    return max(math.hypot(a[0] - b[0], a[1] - b[1]), 1e-3)


def sinr_linear(ue: UserEquipment, topology: Topology, co_channel_cells=()) -> float:
    if ue.serving_cell is None:
        raise ValueError(f"user {ue.id} has no serving cell")
    if ue.serving_cell in set(co_channel_cells):
        raise ValueError("serving cell cannot interfere with itself")
    p = topology.params
    signal = float(dbm_to_mw(received_power_dbm(_distance(ue.position, topology.cells[ue.serving_cell].center), p)))
    interference = sum(
        float(dbm_to_mw(received_power_dbm(_distance(ue.position, topology.cells[c].center), p)))
        for c in co_channel_cells
    )
    return signal / (float(dbm_to_mw(p.noise_dbm)) + interference)


def sinr_matrix(topology: Topology, users: Sequence[UserEquipment]) -> np.ndarray:
    """Per-user SINR with every other cell transmitting in the same band."""
    if not users:
        return np.empty(0)
    pos = np.array([u.position for u in users], dtype=float)
    d = np.maximum(np.linalg.norm(pos[:, None, :] - topology.centers[None, :, :], axis=2), 1e-3)
    rx = dbm_to_mw(received_power_dbm(d, topology.params))
    serving = np.array([u.serving_cell for u in users])
    idx = np.arange(len(users))
    signal = rx[idx, serving].copy()
    # mask rather than subtract: a close user's signal would swamp the sum
    rx[idx, serving] = 0.0
    interference = rx.sum(axis=1)
    return signal / (dbm_to_mw(topology.params.noise_dbm) + interference)


def capacity_bps(bandwidth_hz, sinr):
    b = np.asarray(bandwidth_hz, dtype=float)
    s = np.asarray(sinr, dtype=float)
    if np.any(b < 0) or np.any(s < 0):
        raise ValueError("bandwidth and SINR must be non-negative")
    c = b * np.log2(1.0 + s)
    return float(c) if c.ndim == 0 else c
