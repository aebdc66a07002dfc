import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phantomho.scenario import (
    CLOSED, F1, F2, INDOOR, MACRO, OPEN, OUTDOOR, PHANTOM, CellSpec, ConfigError, Disc, Rect, Region,
    ScenarioConfig, UserState, advance_positions, advance_user, build_topology, count_walls, spawn_users,
    wall_count_matrix,
)


def test_indoor_default_topology_has_26_cells():
    topo = build_topology(ScenarioConfig(case=INDOOR))
    assert len(topo) == 26
    assert [c.id for c in topo] == list(range(26))
    assert all(c.kind == MACRO for c in topo[:2])
    assert all(c.kind == PHANTOM for c in topo[2:])


def test_single_macro_without_phantoms():
    topo = build_topology(ScenarioConfig(num_macros=1, phantoms_per_macro=0))
    assert len(topo) == 1 and topo[0].kind == MACRO


def test_outdoor_topology_is_deterministic():
    cfg = ScenarioConfig(case=OUTDOOR, num_macros=2, phantoms_per_macro=8, seed=7)
    assert build_topology(cfg).cells == build_topology(cfg).cells


@pytest.mark.parametrize("kw", [{"num_macros": 0}, {"phantoms_per_macro": -1}, {"num_users": -1}])
def test_invalid_counts_rejected(kw):
    with pytest.raises(ConfigError):
        ScenarioConfig(**kw)


def test_table_defaults_per_case():
    indoor, outdoor = ScenarioConfig(case=INDOOR), ScenarioConfig(case=OUTDOOR)
    assert (indoor.phantoms_per_macro, indoor.phantom_radius, indoor.speed_range) == (12, 50.0, (0.0, 4.1))
    assert (outdoor.phantoms_per_macro, outdoor.phantom_radius, outdoor.speed_range) == (8, 250.0, (0.0, 8.3))


@pytest.mark.parametrize("case", [INDOOR, OUTDOOR])
def test_cell_invariants(case):
    topo = build_topology(ScenarioConfig(case=case))
    for c in topo:
        assert c.radius > 0 and c.capacity >= 1
        if c.is_macro:
            assert c.band == F1 and c.access_mode == OPEN
        else:
            assert c.band == F2
            parent = topo[c.parent_macro]
            # phantom disc lies inside its parent macro disc
            assert math.dist(c.center, parent.center) + c.radius <= parent.radius + 1e-9


def test_macro_cell_must_be_open_f1():
    with pytest.raises(ConfigError):
        CellSpec(0, MACRO, (0, 0), 1000, 43, F2, 10)


def test_open_fraction_close_to_half():
    # 12500 macros x 8 phantoms = 1e5 independent open/closed draws
    topo = build_topology(ScenarioConfig(num_macros=12500, num_users=0, seed=3))
    modes = np.array([c.access_mode == OPEN for c in topo if not c.is_macro])
    assert len(modes) == 100_000
    assert abs(modes.mean() - 0.5) <= 0.01


def test_closed_cells_get_ten_percent_subscribers():
    cfg = ScenarioConfig(num_users=200, seed=4)
    topo = build_topology(cfg)
    closed = [c for c in topo if c.access_mode == CLOSED]
    assert closed
    assert all(len(c.subscribers) == 20 for c in closed)
    a = topo.access_matrix(200)
    for c in closed:
        col = a[:, c.id - topo.num_macros]
        assert set(np.flatnonzero(col)) == set(c.subscribers)


def test_spawn_zero_users():
    cfg = ScenarioConfig(num_users=0)
    assert spawn_users(cfg, build_topology(cfg)) == []


def test_spawn_is_reproducible():
    cfg = ScenarioConfig(num_users=100, seed=1)
    topo = build_topology(cfg)
    assert spawn_users(cfg, topo) == spawn_users(cfg, topo)


def test_uniform_disc_mean_distance():
    cfg = ScenarioConfig(num_macros=1, phantoms_per_macro=0, num_users=10_000, seed=11)
    users = spawn_users(cfg, build_topology(cfg))
    d = np.array([math.hypot(*u.position) for u in users])
    assert abs(d.mean() - 2000 / 3) <= 0.01 * 2000 / 3


def test_spawned_users_respect_ranges():
    cfg = ScenarioConfig(case=INDOOR, num_users=500)
    topo = build_topology(cfg)
    users = spawn_users(cfg, topo)
    pos = np.array([u.position for u in users])
    assert topo.region.contains(pos[:, 0], pos[:, 1]).all()
    assert all(0 <= u.speed <= 4.1 and 0 <= u.heading < 2 * math.pi for u in users)


DISC = Region((Disc(0.0, 0.0, 1000.0),))


def test_stationary_user_does_not_move():
    u = UserState(0, (10.0, 20.0), 1.0, 0.0)
    assert advance_user(u, 1.0, DISC) == u


def test_straight_move_far_from_boundary():
    u = advance_user(UserState(0, (0.0, 0.0), 0.0, 2.0), 1.0, DISC)
    assert u.position == (2.0, 0.0)


def test_radial_reflection():
    u = advance_user(UserState(0, (999.0, 0.0), 0.0, 2.0), 1.0, DISC)
    assert u.position[0] == pytest.approx(999.0, abs=1e-9)
    assert u.position[1] == pytest.approx(0.0, abs=1e-9)
    assert u.heading == pytest.approx(math.pi)
    assert u.speed == 2.0


REGIONS = [
    DISC,
    Region((Disc(-1000.0, 0.0, 1000.0), Disc(1000.0, 0.0, 1000.0))),
    Region((Rect(-300.0, -200.0, 300.0, 200.0), Rect(500.0, -200.0, 1100.0, 200.0))),
]


@settings(max_examples=300, deadline=None)
@given(region=st.sampled_from(REGIONS), t=st.floats(0, 1), s=st.floats(0, 1),
       heading=st.floats(0, 2 * math.pi, exclude_max=True), speed=st.floats(0, 400))
def test_advance_stays_inside_and_keeps_speed(region, t, s, heading, speed):
    xmin, ymin, xmax, ymax = region.bounds()
    x, y = xmin + t * (xmax - xmin), ymin + s * (ymax - ymin)
    if not region.contains(x, y):
        return
    u = advance_user(UserState(0, (x, y), heading, speed), 1.0, region)
    assert region.contains(*u.position)
    assert u.speed == speed
    assert 0 <= u.heading < 2 * math.pi


def test_vectorised_advance_matches_per_user():
    cfg = ScenarioConfig(case=OUTDOOR, num_users=300, seed=2)
    topo = build_topology(cfg)
    users = spawn_users(cfg, topo)
    pos = np.array([u.position for u in users])
    hd = np.array([u.heading for u in users])
    sp = np.array([u.speed for u in users]) * 50  # long strides hit the boundary often
    new, new_hd = advance_positions(pos, hd, sp, 1.0, topo.region)
    for i, u in enumerate(users):
        ref = advance_user(UserState(i, u.position, u.heading, sp[i]), 1.0, topo.region)
        assert np.allclose(new[i], ref.position, atol=1e-9)
        assert new_hd[i] == pytest.approx(ref.heading, abs=1e-9)


def test_count_walls_examples():
    assert count_walls((0, 0), (10, 0), []) == 0
    assert count_walls((0, 0), (10, 0), [(5, -1, 5, 1)]) == 1
    # 3x3 rooms of unit size: interior partitions at x, y in {1, 2}
    grid = [(1, 0, 1, 3), (2, 0, 2, 3), (0, 1, 3, 1), (0, 2, 3, 2)]
    assert count_walls((0.5, 0.5), (2.5, 2.5), grid) == 4


def test_count_walls_endpoint_touch_is_not_a_crossing():
    assert count_walls((0, 0), (5, 0), [(5, -1, 5, 1)]) == 0
    assert count_walls((0, 0), (10, 0), [(5, 0, 5, 1)]) == 0
    assert count_walls((0, 0), (10, 0), [(2, 0, 8, 0)]) == 0  # collinear


def test_wall_matrix_matches_scalar():
    rng = np.random.default_rng(0)
    pts, tgts = rng.uniform(-5, 5, (40, 2)), rng.uniform(-5, 5, (7, 2))
    walls = rng.uniform(-5, 5, (12, 4))
    q = wall_count_matrix(pts, tgts, walls)
    for i in range(40):
        for j in range(7):
            assert q[i, j] == count_walls(pts[i], tgts[j], walls)


def test_topology_csv(tmp_path):
    topo = build_topology(ScenarioConfig(case=INDOOR))
    path = tmp_path / "cells.csv"
    topo.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cell_id,kind,parent,x,y,radius,power_dbm,capacity,access_mode"
    assert len(lines) == 27
