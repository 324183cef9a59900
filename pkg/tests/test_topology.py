import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcran.topology import (
    Cell, RadioParams, Topology, UserEquipment, build_hex_deployment, capacity_bps,
    dbm_to_mw, drop_users, nearest_cells, path_loss_db, received_power_dbm, sinr_linear,
    sinr_matrix,
)

P = RadioParams()


def test_single_cell_at_origin():
    topo = build_hex_deployment(1, 10.0, P)
    assert topo.num_cells == 1
    assert topo.cells[0].center == (0.0, 0.0)


def test_nineteen_cells_are_center_plus_two_rings():
    topo = build_hex_deployment(19, 10.0, P)
    r = np.linalg.norm(topo.centers, axis=1)
    s3 = math.sqrt(3) * 10
    assert np.sum(np.isclose(r, 0)) == 1
    assert np.sum(np.isclose(r, s3)) == 6
    # second ring: 6 corners at 2*sqrt(3)R and 6 edge midpoints at 3R
    assert np.sum(np.isclose(r, 2 * s3)) == 6
    assert np.sum(np.isclose(r, 30.0)) == 6


@pytest.mark.parametrize("n_cells", [7, 19, 37])
def test_adjacent_centers_are_sqrt3_radius_apart(n_cells):
    radius = 10.0
    c = build_hex_deployment(n_cells, radius, P).centers
    d = [math.dist(c[i], c[j]) for i in range(len(c)) for j in range(i + 1, len(c))]
    nn = math.sqrt(3) * radius
    assert min(d) == pytest.approx(nn, rel=1e-12)
    adjacent = [x for x in d if x < 1.01 * nn]
    assert all(x == pytest.approx(nn, rel=1e-12) for x in adjacent)
    k = {7: 1, 19: 2, 37: 3}[n_cells]
    assert len(adjacent) == 9 * k * k + 3 * k


@pytest.mark.parametrize("bad", [0, 2, 6, 8, 20])
def test_rejects_incomplete_rings(bad):
    with pytest.raises(ValueError, match="hexagonal"):
        build_hex_deployment(bad, 10.0, P)


def test_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        build_hex_deployment(7, 0.0, P)


def test_layout_is_deterministic():
    a = build_hex_deployment(19, 10.0, P)
    b = build_hex_deployment(19, 10.0, P)
    assert a == b


def test_drop_zero_users():
    assert drop_users(build_hex_deployment(19, 10.0, P), 0, 1) == []


def test_drop_users_inside_disks_and_attached():
    topo = build_hex_deployment(19, 10.0, P)
    users = drop_users(topo, 200, 7)
    assert len(users) == 200
    c = topo.centers
    for u in users:
        d = np.linalg.norm(c - np.array(u.position), axis=1)
        assert d.min() <= 10.0 + 1e-9
        assert u.serving_cell == int(np.argmin(d))


def test_drop_is_reproducible():
    topo = build_hex_deployment(19, 10.0, P)
    a = np.array([u.position for u in drop_users(topo, 500, 3)])
    b = np.array([u.position for u in drop_users(topo, 500, 3)])
    assert a.tobytes() == b.tobytes()
    c = np.array([u.position for u in drop_users(topo, 500, 4)])
    assert not np.array_equal(a, c)


def _area_fractions(topo, h=0.05):
    """Grid-integrated share of the disk union attached to each nearest center."""
    c = topo.centers
    R = topo.cells[0].radius
    xs = np.arange(c[:, 0].min() - R, c[:, 0].max() + R, h) + h / 2
    ys = np.arange(c[:, 1].min() - R, c[:, 1].max() + R, h) + h / 2
    counts = np.zeros(len(c))
    for y in ys:
        pts = np.column_stack((xs, np.full_like(xs, y)))
        d = np.linalg.norm(pts[:, None, :] - c[None, :, :], axis=2)
        inside = d.min(axis=1) <= R
        np.add.at(counts, d.argmin(axis=1)[inside], 1)
    return counts / counts.sum()


def test_drop_is_uniform_over_union():
    topo = build_hex_deployment(19, 10.0, P)
    n = 10_000
    users = drop_users(topo, n, 11)
    obs = np.bincount([u.serving_cell for u in users], minlength=19)
    p = _area_fractions(topo)
    exp = n * p
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(obs - exp) < 5 * sigma)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    # 18 dof, 99.9th percentile is about 42.3
    assert chi2 < 42.3


def test_path_loss_unit_distance():
    p = RadioParams(pl0_db=5, alpha=4.4, sigma_db=9.5, gamma_db=30)
    assert path_loss_db(1.0, p) == pytest.approx(11.25, abs=1e-12)


def test_path_loss_ten_vs_one():
    diff = path_loss_db(10.0, P) - path_loss_db(1.0, P)
    assert diff == pytest.approx(10 * P.alpha + (9 / 10) * (P.gamma_db / 2), abs=1e-12)


def test_path_loss_monotone_dense_grid():
    d = np.linspace(1.0, 100.0, 100_000)
    assert np.all(np.diff(path_loss_db(d, P)) > 0)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_path_loss_rejects_nonpositive(d):
    with pytest.raises(ValueError):
        path_loss_db(d, P)


def test_received_power_is_tx_minus_loss():
    assert received_power_dbm(7.0, P) == pytest.approx(P.tx_power_dbm - path_loss_db(7.0, P))


def test_default_noise_floor():
    assert P.noise_dbm == pytest.approx(-174 + 10 * math.log10(20e6) + 7)


def _two_cells():
    cells = (Cell(0, (0.0, 0.0), 10.0), Cell(1, (20.0, 0.0), 10.0))
    return Topology(cells, P)


def test_snr_without_interferers():
    topo = _two_cells()
    ue = UserEquipment(0, (3.0, 4.0), serving_cell=0)
    snr = sinr_linear(ue, topo, ())
    expected = 10 ** (received_power_dbm(5.0, P) / 10) / 10 ** (P.noise_dbm / 10)
    assert snr == pytest.approx(expected, rel=1e-12)


def test_symmetric_interferer():
    topo = _two_cells()
    ue = UserEquipment(0, (10.0, 0.0), serving_cell=0)
    snr = sinr_linear(ue, topo, ())
    sinr = sinr_linear(ue, topo, (1,))
    assert sinr < snr
    s = 10 ** (received_power_dbm(10.0, P) / 10)
    n = 10 ** (P.noise_dbm / 10)
    assert sinr == pytest.approx(s / (n + s), rel=1e-12)


def test_sinr_requires_serving_cell():
    with pytest.raises(ValueError):
        sinr_linear(UserEquipment(0, (1.0, 1.0)), _two_cells(), ())
    with pytest.raises(ValueError):
        sinr_linear(UserEquipment(0, (1.0, 1.0), serving_cell=0), _two_cells(), (0,))


def test_sinr_matches_direct_summation():
    topo = build_hex_deployment(19, 10.0, P)
    users = drop_users(topo, 50, 5)
    vec = sinr_matrix(topo, users)
    for ue, v in zip(users, vec):
        sig = intf = 0.0
        for cell in topo.cells:
            d = math.dist(ue.position, cell.center)
            pl = P.pl0_db + 10 * P.alpha * math.log10(d) + P.sigma_db / 2 + d / 10 * P.gamma_db / 2
            mw = 10 ** ((P.tx_power_dbm - pl) / 10)
            if cell.id == ue.serving_cell:
                sig = mw
            else:
                intf += mw
        direct = sig / (10 ** (P.noise_dbm / 10) + intf)
        assert v == pytest.approx(direct, rel=1e-9)
        others = [c.id for c in topo.cells if c.id != ue.serving_cell]
        assert sinr_linear(ue, topo, others) == pytest.approx(direct, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-60, 60), st.floats(-60, 60), st.lists(st.integers(1, 18), unique=True, max_size=17),
       st.integers(1, 18))
def test_adding_interferer_never_increases_sinr(x, y, base, extra):
    topo = build_hex_deployment(19, 10.0, P)
    ue = UserEquipment(0, (x, y), serving_cell=0)
    base = set(base) - {extra}
    assert sinr_linear(ue, topo, base | {extra}) <= sinr_linear(ue, topo, base)


def test_capacity_examples():
    assert capacity_bps(0.0, 123.0) == 0.0
    assert capacity_bps(20e6, 3.0) == pytest.approx(40e6, rel=1e-15)
    assert capacity_bps(20e6, 1.0) == pytest.approx(20e6, rel=1e-15)


@pytest.mark.parametrize("b,s", [(-1.0, 1.0), (1.0, -0.5)])
def test_capacity_rejects_negative(b, s):
    with pytest.raises(ValueError):
        capacity_bps(b, s)


@given(st.floats(0, 1e9), st.floats(0, 1e9), st.floats(0, 1e6), st.floats(0, 1e6))
def test_capacity_monotone(b1, b2, s1, s2):
    lo_b, hi_b = sorted((b1, b2))
    lo_s, hi_s = sorted((s1, s2))
    assert capacity_bps(lo_b, lo_s) <= capacity_bps(hi_b, lo_s)
    assert capacity_bps(lo_b, lo_s) <= capacity_bps(lo_b, hi_s)


def test_nearest_cells_vectorized():
    topo = build_hex_deployment(7, 10.0, P)
    pts = topo.centers + 0.5
    assert list(nearest_cells(topo, pts)) == list(range(7))


def test_dbm_conversion():
    assert dbm_to_mw(0.0) == 1.0
    assert dbm_to_mw(30.0) == pytest.approx(1000.0)
