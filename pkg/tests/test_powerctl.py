import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmse_uplink.geometry import (HexDistance, NetworkRealization, build_lattice, in_hexagon,
                                  sample_mobiles)
from mmse_uplink.montecarlo import empirical_edf, ks_distance
from mmse_uplink.params import (ConfigError, ConstantPower, Fractional, PathLossInversion,
                                ScenarioParams, TwoLevel)
from mmse_uplink.powerctl import (PowerAssignment, assign_powers, fractional_moment, point_mass,
                                  power_distribution, representative_q_cdf, select_active)

NET = dict(alpha=4.0, rho_m=1.0, rho_c=1e-4, K=10, N=64, R=2000.0)


def scenario(policy, **kw):
    return ScenarioParams(**{**NET, **kw}, policy=policy)


def hex_points(n, side, rng):
    """Uniform points in a pointy-top hexagon by rejection from its bounding box."""
    a = side * math.sqrt(3) / 2
    out = []
    got = 0
    while got < n:
        m = int(1.4 * (n - got)) + 100
        off = np.column_stack([(2 * rng.random(m) - 1) * a, (2 * rng.random(m) - 1) * side])
        off = off[in_hexagon(off, side)]
        out.append(off)
        got += len(off)
    return np.concatenate(out)[:n]


# --- selection ---------------------------------------------------------------

def test_small_cell_fully_selected():
    mask = select_active(np.zeros(3, dtype=int), 10, np.random.default_rng(0))
    assert mask.all()


def test_selection_frequency_is_uniform():
    rng = np.random.default_rng(2024)
    cells = np.zeros(100, dtype=int)
    reps = 10_000
    hits = np.zeros(100)
    for _ in range(reps):
        m = select_active(cells, 10, rng)
        assert m.sum() == 10
        hits += m
    freq = hits / reps
    sigma = math.sqrt(0.1 * 0.9 / reps)
    assert np.all(np.abs(freq - 0.1) <= 3 * sigma)


def test_reserved_cell_keeps_slot_for_representative():
    cells = np.repeat([0, 1], 50)
    m = select_active(cells, 10, np.random.default_rng(1), reserved_cell=0)
    assert m[cells == 0].sum() == 9 and m[cells == 1].sum() == 10


def test_ineligible_mobiles_never_selected_and_do_not_use_slots():
    cells = np.zeros(30, dtype=int)
    elig = np.arange(30) % 3 != 0
    m = select_active(cells, 10, np.random.default_rng(4), eligible=elig)
    assert m.sum() == 10 and not m[~elig].any()


def test_k_must_be_positive():
    with pytest.raises(ValueError):
        select_active(np.zeros(3, dtype=int), 0, np.random.default_rng(0))


# --- assignment --------------------------------------------------------------

def handmade_network(lat, offsets_by_cell, rep):
    pos, cell = [], []
    for c, offs in offsets_by_cell.items():
        for o in offs:
            pos.append(lat.centers[c] + np.asarray(o))
            cell.append(c)
    return NetworkRealization(positions=np.array(pos).reshape(-1, 2),
                              cell_index=np.array(cell, dtype=np.int64),
                              representative=np.asarray(rep, dtype=float), disk_radius=500.0,
                              n=len(pos), mode="exact", origin_index=lat.origin_index)


def test_path_loss_inversion_power_at_distance_three():
    lat = build_lattice(1e-4, 500.0)
    other = lat.index_of(1, 0)
    net = handmade_network(lat, {int(other): [(3.0, 0.0)]}, rep=(0.0, 2.0))
    pa = assign_powers(PathLossInversion(), net, lat, np.random.default_rng(0), alpha=4.0, K=10)
    assert pa.powers[0] == pytest.approx(81.0)
    assert pa.p0 == pytest.approx(16.0) and pa.r0 == pytest.approx(2.0)


def test_inversion_silences_mobiles_near_base_station():
    lat = build_lattice(1e-4, 500.0)
    c = int(lat.index_of(0, 1))
    net = handmade_network(lat, {c: [(0.5, 0.0), (2.0, 0.0)]}, rep=(0.0, 2.0))
    pa = assign_powers(PathLossInversion(), net, lat, np.random.default_rng(0), alpha=4.0, K=10)
    assert list(pa.active) == [False, True]
    assert pa.powers[0] == 0.0


def test_equal_power_when_epsilon_zero():
    p = scenario(Fractional(0.0), R=600.0)
    lat = build_lattice(p.rho_c, p.R)
    net = sample_mobiles(p, np.random.default_rng(0), lat)
    pa = assign_powers(p.policy, net, lat, np.random.default_rng(1), alpha=4.0, K=10)
    assert np.all(pa.powers[pa.active] == 1.0) and pa.p0 == 1.0


def test_two_level_splits_each_full_cell_in_half():
    p = scenario(TwoLevel(0.5, 1.0), R=800.0)
    lat = build_lattice(p.rho_c, p.R)
    net = sample_mobiles(p, np.random.default_rng(3), lat)
    pa = assign_powers(p.policy, net, lat, np.random.default_rng(4), alpha=4.0, K=10)
    pa.check(net, 10, *p.power_bounds)
    interior = np.flatnonzero(np.hypot(*lat.centers.T) + lat.side < p.R)
    for c in interior:
        sel = pa.active & (net.cell_index == c)
        pw = pa.powers[sel]
        d = pa.cell_distance[sel]
        if c == lat.origin_index:
            pw = np.append(pw, pa.p0)
            d = np.append(d, pa.r0)
        assert len(pw) == 10
        assert np.sum(pw == 0.5) == 5 and np.sum(pw == 1.0) == 5
        assert d[pw == 0.5].max() <= d[pw == 1.0].min()


def test_check_detects_violations():
    p = scenario(ConstantPower(), R=400.0)
    lat = build_lattice(p.rho_c, p.R)
    net = sample_mobiles(p, np.random.default_rng(0), lat)
    pa = assign_powers(p.policy, net, lat, np.random.default_rng(1), alpha=4.0, K=10)
    pa.check(net, 10, *p.power_bounds)
    bad = PowerAssignment(pa.powers * 2, pa.active, pa.cell_distance, pa.p0, pa.r0)
    with pytest.raises(AssertionError):
        bad.check(net, 10, *p.power_bounds)
    with pytest.raises(AssertionError):
        pa.check(net, 5, *p.power_bounds)


@given(st.sampled_from([ConstantPower(), TwoLevel(0.5, 1.0), Fractional(0.5), Fractional(1.0)]),
       st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
def test_assignment_invariants_hold(policy, seed, K):
    p = scenario(policy, R=500.0, K=K)
    lat = build_lattice(p.rho_c, p.R)
    rng = np.random.default_rng(seed)
    net = sample_mobiles(p, rng, lat)
    pa = assign_powers(policy, net, lat, rng, alpha=4.0, K=K)
    pa.check(net, K, *p.power_bounds)


def test_unknown_policy_rejected():
    lat = build_lattice(1e-4, 100.0)
    net = handmade_network(lat, {}, rep=(1.0, 1.0))
    with pytest.raises(ConfigError):
        assign_powers(object(), net, lat, np.random.default_rng(0), alpha=4.0, K=10)


# --- distributions -----------------------------------------------------------

def test_constant_power_distribution():
    d = power_distribution(ConstantPower(1.0), scenario(ConstantPower(1.0)))
    assert d.zero_mass == pytest.approx(0.999)
    assert d.atoms == ((1.0, pytest.approx(1e-3)),)


@pytest.mark.parametrize("policy", [ConstantPower(), TwoLevel(0.5, 1.0), Fractional(0.0),
                                    Fractional(0.5), Fractional(1.0), Fractional(0.3, 0.0)])
def test_total_mass_is_one(policy):
    d = power_distribution(policy, scenario(policy))
    assert d.total_mass() == pytest.approx(1.0, abs=1e-10)


def test_inversion_moment_matches_sampling():
    p = scenario(Fractional(1.0))
    d = power_distribution(p.policy, p)
    act = p.activity
    h = HexDistance(p.cell_side)
    exact = (5 * h.side ** 2 / 12 - math.pi / (2 * h.area)) / (1 - math.pi / h.area)
    assert fractional_moment(d, 4.0) == pytest.approx(act * exact, rel=1e-12)
    # frozen: mean of d^2 over 1e7 hexagon points with d >= 1 (seed 999) = 1604.584 +- 0.30
    assert fractional_moment(d, 4.0) / act == pytest.approx(1604.584030094457, rel=5e-4)


def test_two_level_moment_and_truncation():
    p = scenario(TwoLevel(0.5, 1.0))
    d = power_distribution(p.policy, p)
    act = p.activity
    assert fractional_moment(d, 4.0) == pytest.approx(act * (math.sqrt(0.5) + 1) / 2)
    assert fractional_moment(d, 4.0, 0.7) == pytest.approx(act * 0.5)
    assert fractional_moment(d, 4.0, 1.0) == 0.0
    assert fractional_moment(d, 4.0, 5.0) == 0.0


@pytest.mark.parametrize("policy", [Fractional(0.5), Fractional(1.0), ConstantPower(2.0)])
def test_moment_vanishes_above_max_power(policy):
    p = scenario(policy)
    d = power_distribution(policy, p)
    assert fractional_moment(d, 4.0, p.power_bounds[1]) == pytest.approx(0.0, abs=1e-15)
    assert fractional_moment(d, 4.0, 0.0) > 0


def test_fractional_moment_needs_alpha_above_two():
    with pytest.raises(ValueError):
        fractional_moment(point_mass(), 2.0)


@pytest.mark.parametrize("policy", [ConstantPower(), TwoLevel(0.5, 1.0), Fractional(0.5)])
def test_moment_scales_with_active_density(policy):
    # rho_m E[P^(2/alpha)] = K rho_c E[P_active^(2/alpha)] for any rho_m
    vals = []
    for rho_m in [0.5, 1.0, 4.0]:
        p = scenario(policy, rho_m=rho_m)
        d = power_distribution(policy, p)
        vals.append(rho_m * fractional_moment(d, 4.0))
        active = fractional_moment(d, 4.0) / d.activity
        assert rho_m * fractional_moment(d, 4.0) == pytest.approx(10 * 1e-4 * active, rel=1e-12)
    assert np.allclose(vals, vals[0], rtol=1e-12)


def test_simulated_active_powers_follow_distribution():
    p = scenario(Fractional(0.5), R=1200.0)
    lat = build_lattice(p.rho_c, p.R)
    d = power_distribution(p.policy, p)
    interior = np.flatnonzero(np.hypot(*lat.centers.T) + lat.side < p.R)
    rng = np.random.default_rng(8)
    samples = []
    for _ in range(20):
        net = sample_mobiles(p, rng, lat)
        pa = assign_powers(p.policy, net, lat, rng, alpha=4.0, K=10)
        keep = pa.active & np.isin(net.cell_index, interior)
        samples.append(pa.powers[keep])
    samples = np.concatenate(samples)
    F = lambda x: 1.0 - d.survival(np.asarray(x)) / d.activity  # noqa: E731
    ks = ks_distance(F, empirical_edf(samples))
    assert ks < 1.63 / math.sqrt(len(samples))


# --- law of q = P0 r0^-alpha -------------------------------------------------

def test_inversion_q_is_unit_step():
    p = scenario(PathLossInversion())
    F = representative_q_cdf(p.policy, p)
    assert list(F([0.5, 0.999999, 1.0, 3.0])) == [0.0, 0.0, 1.0, 1.0]
    assert F.atoms == (1.0,)
    G = representative_q_cdf(Fractional(1.0), p)
    assert np.array_equal(F(np.linspace(0, 2, 21)), G(np.linspace(0, 2, 21)))


def test_fractional_q_cdf_against_sampling():
    p = scenario(Fractional(0.5))
    F = representative_q_cdf(p.policy, p)
    rng = np.random.default_rng(10)
    r = np.hypot(*hex_points(400_000, p.cell_side, rng).T)
    r = r[r >= 1.0]
    q = r ** (4 * (0.5 - 1))
    assert ks_distance(F, empirical_edf(q)) < 1.63 / math.sqrt(len(q))


def test_two_level_q_cdf_against_order_statistics_simulation():
    p = scenario(TwoLevel(0.5, 1.0), K=10)
    F = representative_q_cdf(p.policy, p)
    rng = np.random.default_rng(77)
    trials, K = 1_000_000, 10
    r = np.hypot(*hex_points(trials * K, p.cell_side, rng).T).reshape(trials, K)
    r0 = r[:, 0]
    rank = np.sum(r[:, 1:] < r0[:, None], axis=1)
    P0 = np.where(rank < K // 2, 0.5, 1.0)
    q = P0 * r0 ** -4.0
    assert ks_distance(F, empirical_edf(q)) <= 0.005


def test_q_cdfs_are_valid():
    for policy in [ConstantPower(), TwoLevel(0.5, 1.0), Fractional(0.25)]:
        p = scenario(policy)
        F = representative_q_cdf(policy, p)
        q = np.geomspace(1e-12, 1e6, 400)
        v = F(q)
        assert np.all(np.diff(v) >= -1e-15)
        assert v[0] == pytest.approx(0.0, abs=1e-12) and v[-1] == pytest.approx(1.0, abs=1e-6)
        assert F(0.0) == 0.0
