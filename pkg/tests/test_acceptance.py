"""Acceptance criteria, one test (or a few) per criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; a pass/fail line per
criterion is printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from bcran import cli, dcf
from bcran.config import from_dict
from bcran.ledger import (
    LedgerConfig, LinkModel, analytic_confirmation_delay, fork_free_overhead, fork_probability,
    overhead_ratio, sample_mining_time, simulate_ledger,
)
from bcran.market import Bid, buyer_utility, service_acceptance
from bcran.sim import run_scenario
from bcran.streams import KeyedStream
from bcran.topology import capacity_bps

from dcf_oracle import simulate_dcf

SEEDS = range(20)


# -- 1 ---------------------------------------------------------------------------
DELAY_GRID = [(kind, sb, tw, lam)
            for kind in ("public", "private")
            for sb in (3000, 15000, 30000)
            for tw in (0.1, 5.0)
            for lam in (1.0, 5.0)]


@pytest.mark.parametrize("kind,sb,tw,lam", DELAY_GRID)
def test_c1_delay_formula_cross_validation(acceptance, kind, sb, tw, lam):
    cfg = getattr(LedgerConfig, kind)(block_size_bits=sb, max_wait_s=tw)
    t0 = time.perf_counter()
    m = simulate_ledger(cfg, lam, 10_000, seed=1)
    elapsed = time.perf_counter() - t0
    predicted = analytic_confirmation_delay(
        m.mean("upload_delays"), m.mean("queue_delays"), m.mean("mining_delays"),
        m.mean("prop_delays"), m.fork_rate)
    observed = m.mean("confirmation_delays")
    err = abs(observed / predicted - 1)
    ok = m.n_confirmed >= 10_000 and m.fork_rate < 0.3 and err < 0.05 and elapsed < 60
    acceptance.check(1, ok, f"{kind} S_B={sb} T_w={tw} lam={lam}: rel err {err:.4f}, "
                            f"p_fork {m.fork_rate:.3f}, {elapsed:.1f}s")


# -- 2 ---------------------------------------------------------------------------
def test_c2_public_fork_calibration(acceptance):
    cfg = LedgerConfig.public(block_size_bits=3000)
    m = simulate_ledger(cfg, 5.0, 10_000, seed=2)
    n = m.blocks_mined
    p = fork_probability(cfg.mining_rate, float(np.mean(m.block_prop_delays)))
    sigma = math.sqrt(p * (1 - p) / n)
    z = (m.fork_rate - p) / sigma
    acceptance.check(2, n >= 10_000 and abs(z) <= 3,
                     f"public: {n} blocks, orphan {m.fork_rate:.4f} vs {p:.4f} (z={z:+.2f})")


def test_c2_private_never_forks(acceptance):
    m = simulate_ledger(LedgerConfig.private(block_size_bits=3000), 5.0, 10_000, seed=2)
    acceptance.check(2, m.forks == 0 and m.blocks_mined >= 10_000,
                     f"private: {m.blocks_mined} blocks, {m.forks} orphans")


# -- 3 ---------------------------------------------------------------------------
def _law_check(draws, mu=10.0):
    mean_err = abs(draws.mean() / (1 / mu) - 1)
    ks = stats.kstest(draws, "expon", args=(0, 1 / mu)).statistic
    return mean_err, ks


def test_c3_mining_law_generator(acceptance):
    draws = sample_mining_time(np.random.default_rng(3), 10.0, 1_000_000)
    mean_err, ks = _law_check(draws)
    acceptance.check(3, mean_err < 0.01 and ks < 0.002,
                     f"generator: mean err {mean_err:.4%}, KS {ks:.5f}")


def test_c3_mining_law_keyed(acceptance):
    ks_stream = KeyedStream(3, "ledger-public")
    draws = np.array([ks_stream.exponential(10.0, i, 0, 0) for i in range(1_000_000)])
    mean_err, ks = _law_check(draws)
    acceptance.check(3, mean_err < 0.01 and ks < 0.002,
                     f"keyed: mean err {mean_err:.4%}, KS {ks:.5f}")


# -- 4 ---------------------------------------------------------------------------
@pytest.mark.parametrize("n", [1, 5, 10])
def test_c4_slot_oracle(acceptance, n):
    p = dcf.DcfParams()
    sim = simulate_dcf(n, p, 3000, 1_000_000, seed=n)
    sol = dcf.solve(n, 3000, p)
    err = abs(sol.expected_slot / sim.mean_slot_s - 1)
    tau, p_c = dcf.solve_tau(n, p)
    residual = abs(dcf._tau_of_pc(1 - (1 - tau) ** (n - 1), p) - tau)
    ok = err < 0.02 and residual < 1e-10 and (n > 1 or p_c == 0.0)
    acceptance.check(4, ok, f"N={n}: E[T_slot] err {err:.4%}, residual {residual:.1e}, p_c {p_c:.4f}")


# -- 5 ---------------------------------------------------------------------------
def _delay_curve(kind, tw, seed, lam=0.1, n=1000):
    out = []
    for sb in cli.BLOCK_SIZES:
        cfg = getattr(LedgerConfig, kind)(block_size_bits=sb, max_wait_s=tw)
        out.append(simulate_ledger(cfg, lam, n, seed).mean("confirmation_delays"))
    return np.array(out)


@pytest.mark.parametrize("kind", ["public", "private"])
def test_c5_delay_trend(acceptance, kind):
    monotone = smaller = 0
    for seed in SEEDS:
        slow = _delay_curve(kind, 5.0, seed)
        fast = _delay_curve(kind, 0.1, seed)
        monotone += bool(np.all(np.diff(slow) >= 0))
        smaller += bool(fast[-1] - fast[0] < slow[-1] - slow[0])
    n = len(SEEDS)
    ok = monotone / n >= 0.9 and smaller / n >= 0.9
    acceptance.check(5, ok, f"{kind}: non-decreasing in S_B {monotone}/{n}, "
                            f"smaller T_wait sensitivity {smaller}/{n}")


# -- 6 ---------------------------------------------------------------------------
def test_c6_overhead_trend(acceptance):
    H, L = 1000, 3000
    limit = [fork_free_overhead(H, sb / L, L) for sb in cli.BLOCK_SIZES]
    decreasing = all(b < a for a, b in zip(limit, limit[1:]))
    checked = above = 0
    for sb in cli.BLOCK_SIZES:
        m = simulate_ledger(LedgerConfig.public(block_size_bits=sb), 10.0, 3000, seed=6)
        if m.fork_rate > 0:
            checked += 1
            k = float(np.mean(m.block_tx_counts))
            above += overhead_ratio(m) > fork_free_overhead(H, k, L)
    ok = decreasing and checked > 0 and above == checked
    acceptance.check(6, ok, f"closed form strictly decreasing: {decreasing}; "
                            f"simulated above fork-free limit at {above}/{checked} forked points")


# -- 7 ---------------------------------------------------------------------------
def test_c7_sharing_trend(acceptance):
    t0 = time.perf_counter()
    base = from_dict({"sim": {"horizon_s": 300.0}, "market": {"ownership": "random"}})
    ms = (2, 3, 4, 5)
    res = {}
    for m in ms:
        cfg = base.with_overrides({"market.operators": m})
        for sharing in (False, True):
            res[m, sharing] = [run_scenario(cfg, s, sharing=sharing).summary() for s in SEEDS]
    elapsed = time.perf_counter() - t0
    parts = []
    ok = elapsed < 300
    for key in ("mean_capacity_bps", "mean_acceptance"):
        st = np.array([[r[key] for r in res[m, False]] for m in ms])
        dy = np.array([[r[key] for r in res[m, True]] for m in ms])
        mono = float(np.mean(np.all(np.diff(st, axis=0) <= 0, axis=0)))
        paired = float(np.mean(dy >= st))
        ok = ok and mono >= 0.9 and paired >= 0.9
        parts.append(f"{key}: static non-increasing {mono:.2f}, dynamic>=static {paired:.2f}")
    acceptance.check(7, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 8 ---------------------------------------------------------------------------
def test_c8_mno_mvno(acceptance):
    seeds = range(5)
    out = {}
    for name, ratio in (("1-0", [1.0, 0.0]), ("0.5-0.5", [0.5, 0.5])):
        cfg = from_dict({"market": {"operators": 2, "ownership": ratio}})
        for sharing in (False, True):
            runs = [run_scenario(cfg, s, sharing=sharing).summary() for s in seeds]
            out[name, sharing] = {k: float(np.mean([r[k] for r in runs])) for k in runs[0]}
    st, dy = out["1-0", False], out["1-0", True]
    ok1 = st["rejected"] > 0 and st["mean_acceptance"] < dy["mean_acceptance"]
    st2, dy2 = out["0.5-0.5", False], out["0.5-0.5", True]
    ok2 = dy2["mean_capacity_bps"] >= st2["mean_capacity_bps"]
    acceptance.check(8, ok1 and ok2,
                     f"1-0 static rejected {st['rejected']:.0f}, acceptance {st['mean_acceptance']:.3f} "
                     f"vs dynamic {dy['mean_acceptance']:.3f}; 0.5-0.5 capacity dynamic "
                     f"{dy2['mean_capacity_bps']:.4g} vs static {st2['mean_capacity_bps']:.4g}")


# -- 9 ---------------------------------------------------------------------------
def test_c9_formulas(acceptance):
    checks = {
        "capacity": capacity_bps(20e6, 3.0) == pytest.approx(40e6, rel=1e-12),
        "acceptance b=0": service_acceptance(0.0, 0.5, 0.1, 0.1) == 0.0,
        "acceptance unit": service_acceptance(1.0, 1.0, 0.1, 0.2, C=1.0) == pytest.approx(1 - math.exp(-1)),
    }
    rng = np.random.default_rng(9)
    invariant = True
    for _ in range(500):
        k = int(rng.integers(1, 5))
        w = rng.random(k)
        bids = [Bid(s, tuple(rng.random(k))) for s in range(int(rng.integers(1, 20)))]
        c = float(rng.uniform(0.01, 100))
        scaled = [Bid(b.seller, tuple(c * x for x in b.features)) for b in bids]
        invariant &= buyer_utility(w, bids)[0] == buyer_utility(w, scaled)[0]
    checks["argmax scale invariance"] = invariant
    worst = max(abs(sum(dcf.stage_distribution(p, r)) - 1)
                for p in np.linspace(0, 0.999, 200) for r in range(0, 12))
    checks["stage distribution"] = worst <= 1e-12
    failed = [k for k, v in checks.items() if not v]
    acceptance.check(9, not failed, f"{len(checks) - len(failed)}/{len(checks)} formula checks"
                                    + (f", failed: {failed}" if failed else "") + f", max |sum pi - 1| {worst:.1e}")


# -- 10 --------------------------------------------------------------------------
SMALL = {"ledger.n_transactions": 300, "sim.horizon_s": 60.0}


@pytest.mark.parametrize("preset", list(cli.PRESETS))
def test_c10_byte_identical_reruns(acceptance, tmp_path, preset):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.run_experiment(preset, SMALL, d, seed=7, replications=2) == 0
    files = sorted(p.name for p in a.iterdir())
    same = files == sorted(p.name for p in b.iterdir()) and all(
        (a / f).read_bytes() == (b / f).read_bytes() for f in files)
    acceptance.check(10, same and len(files) > 0, f"{preset}: {len(files)} files identical")
