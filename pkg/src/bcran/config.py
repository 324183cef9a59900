"""Scenario configuration: JSON in, validated frozen dataclasses out."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Union

import jsonschema

from .dcf import DcfParams
from .ledger import LedgerConfig, LinkModel
from .topology import RadioParams, rings_for

DEFAULTS: dict = {
    "topology": {"num_cells": 19, "radius_m": 10.0, "num_users": 200},
    "radio": {
        "tx_power_dbm": 20.0, "pl0_db": 5.0, "alpha": 4.4, "sigma_db": 9.5,
        "gamma_db": 30.0, "bandwidth_hz": 20e6, "carrier_hz": 5e9,
        "noise_figure_db": 7.0, "noise_dbm": None,
    },
    "dcf": {
        "cw_min": 16, "max_backoff_stage": 6, "r_max": 7, "mcs_index": 0,
        "empty_slot_us": 9.0, "sifs_us": 16.0, "difs_us": 34.0,
        "rts_us": 52.0, "cts_us": 44.0, "ack_us": 44.0, "phy_header_us": 44.0,
    },
    "ledger": {
        "tx_bits": 3000,
        "n_transactions": 2000,
        "public": {
            "block_size_bits": 15000, "max_wait_s": 5.0, "mining_rate": 10.0,
            "n_peers": 10, "header_bits": 1000,
            "link": {"variant": "dcf", "delay_s": 0.0, "contenders": "inflight"},
        },
        "private": {
            "block_size_bits": 15000, "max_wait_s": 5.0, "mining_rate": 10.0,
            "n_peers": 10, "header_bits": 1000,
            "link": {"variant": "constant", "delay_s": 0.010, "contenders": "inflight"},
        },
    },
    "market": {
        "operators": 2,
        "ownership": "random",
        "slices_per_cell": 20,
        "policy": "random_uniform",
        "utility_weights": [1.0, 0.0],
        "sharing": "dynamic",
        "lease_duration_s": 10.0,
        "lease_price_range": [0.1, 1.0],
        "acceptance_c": 5.0,
        "psi_range": [0.01, 0.2],
        "xi_range": [0.01, 0.2],
        "profile": "average",
    },
    "sim": {"horizon_s": 600.0, "epoch_s": 10.0, "sample_s": 1.0, "seed": 0, "replications": 1},
}


class ConfigError(ValueError):
    """Aggregated configuration problems, one ``(key_path, message)`` per entry."""

    def __init__(self, problems: list[tuple[str, str]], source: str = "config"):
        self.problems = problems
        lines = [f"{source}: {len(problems)} problem(s)"]
        lines += [f"  {path or '<root>'}: {msg}" for path, msg in problems]
        super().__init__("\n".join(lines))


@dataclass(frozen=True)
class TopologyConfig:
    num_cells: int = 19
    radius_m: float = 10.0
    num_users: int = 200


@dataclass(frozen=True)
class MarketConfig:
    operators: int = 2
    ownership: Union[str, tuple] = "random"
    slices_per_cell: int = 20
    policy: str = "random_uniform"
    utility_weights: tuple = (1.0, 0.0)
    sharing: str = "dynamic"
    lease_duration_s: float = 10.0
    lease_price_range: tuple = (0.1, 1.0)
    acceptance_c: float = 5.0
    psi_range: tuple = (0.01, 0.2)
    xi_range: tuple = (0.01, 0.2)
    profile: Union[str, tuple] = "average"

    def __post_init__(self):
        if self.ownership != "random":
            if len(self.ownership) != self.operators:
                raise ValueError(f"ownership needs {self.operators} ratios, got {len(self.ownership)}")
            if sum(self.ownership) <= 0:
                raise ValueError("ownership ratios must have a positive sum")
        for name in ("lease_price_range", "psi_range", "xi_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} lower bound exceeds upper bound")
        if self.lease_price_range[0] < 0:
            raise ValueError("lease prices must be >= 0")
        if self.policy == "utility" and len(self.utility_weights) != 2:
            raise ValueError("utility_weights must hold 2 weights (price, free share)")
        if not isinstance(self.profile, str) and sum(w for _, w in self.profile) <= 0:
            raise ValueError("profile mix weights must have a positive sum")


@dataclass(frozen=True)
class RunConfig:
    horizon_s: float = 600.0
    epoch_s: float = 10.0
    sample_s: float = 1.0
    seed: int = 0
    replications: int = 1


@dataclass(frozen=True)
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    radio: RadioParams = field(default_factory=RadioParams)
    dcf: DcfParams = field(default_factory=DcfParams)
    public: LedgerConfig = field(default_factory=LedgerConfig.public)
    private: LedgerConfig = field(default_factory=LedgerConfig.private)
    market: MarketConfig = field(default_factory=MarketConfig)
    run: RunConfig = field(default_factory=RunConfig)
    n_transactions: int = 2000
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS), compare=False, repr=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict) -> "SimConfig":
        data = self.to_dict()
        for path, value in overrides.items():
            set_dotted(data, path, value)
        return from_dict(data)

    def ledger_config(self, kind: str) -> LedgerConfig:
        return self.public if kind == "public" else self.private


def _schema() -> dict:
    return json.loads(resources.files("bcran").joinpath("config.schema.json").read_text())


def deep_merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(data: dict, path: str, value: Any) -> None:
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError([(path, f"{k} is not a section")])
    node[keys[-1]] = value


def _build(section: str, problems: list, fn, *args):
    try:
        return fn(*args)
    except (ValueError, TypeError) as exc:
        problems.append((section, str(exc)))
        return None


def _ledger(kind: str, d: dict, tx_bits: int, dcf_params: DcfParams) -> LedgerConfig:
    link = d["link"]
    if link["variant"] == "dcf":
        lm = LinkModel.wifi(dcf_params, link["contenders"])
    else:
        lm = LinkModel.constant(link["delay_s"])
    return LedgerConfig(
        kind=kind, block_size_bits=d["block_size_bits"], max_wait_s=d["max_wait_s"],
        mining_rate=d["mining_rate"], link=lm, n_peers=d["n_peers"],
        header_bits=d["header_bits"], tx_bits=tx_bits,
    )


def _market(d: dict) -> MarketConfig:
    profile = d["profile"]
    if isinstance(profile, dict):
        profile = tuple(sorted(profile.items()))
    ownership = d["ownership"]
    if not isinstance(ownership, str):
        ownership = tuple(float(x) for x in ownership)
    return MarketConfig(
        operators=d["operators"], ownership=ownership, slices_per_cell=d["slices_per_cell"],
        policy=d["policy"], utility_weights=tuple(d["utility_weights"]), sharing=d["sharing"],
        lease_duration_s=d["lease_duration_s"], lease_price_range=tuple(d["lease_price_range"]),
        acceptance_c=d["acceptance_c"], psi_range=tuple(d["psi_range"]),
        xi_range=tuple(d["xi_range"]), profile=profile,
    )


def from_dict(data: dict, source: str = "config") -> SimConfig:
    """Validate ``data`` against the schema and invariants; fill in defaults."""
    if not isinstance(data, dict):
        raise ConfigError([("", "top level must be a JSON object")], source)
    validator = jsonschema.Draft202012Validator(_schema())
    problems = [
        (".".join(str(p) for p in err.absolute_path), err.message)
        for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    ]
    if problems:
        raise ConfigError(problems, source)

    d = deep_merge(DEFAULTS, data)
    problems = []
    radio = _build("radio", problems, lambda: RadioParams(**d["radio"]))
    dcf_params = _build("dcf", problems, lambda: DcfParams(**d["dcf"]))
    tx_bits = d["ledger"]["tx_bits"]
    public = private = None
    if dcf_params is not None:
        public = _build("ledger.public", problems, _ledger, "public", d["ledger"]["public"], tx_bits, dcf_params)
        private = _build("ledger.private", problems, _ledger, "private", d["ledger"]["private"], tx_bits, dcf_params)
    market = _build("market", problems, _market, d["market"])
    topo = d["topology"]
    _build("topology.num_cells", problems, rings_for, topo["num_cells"])
    if problems:
        raise ConfigError(problems, source)
    return SimConfig(
        topology=TopologyConfig(**topo),
        radio=radio,
        dcf=dcf_params,
        public=public,
        private=private,
        market=market,
        run=RunConfig(**d["sim"]),
        n_transactions=d["ledger"]["n_transactions"],
        raw=d,
    )


def parse_config(path: Union[str, Path, None]) -> SimConfig:
    if path is None:
        return from_dict({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("", f"cannot read {path}: {exc.strerror}")], str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")],
                          str(path)) from exc
    return from_dict(data, str(path))
