import numpy as np
import pytest

from normotion.kalman import (OUT_OF_SUPPORT_XI, DetectorConfig, InnovationRecord,
                              KfState, ZoneDynamics, abnormal_runs, kf_predict,
                              kf_update, read_innovations_csv, run_bank,
                              write_innovations_csv)
from normotion.model import SpatialGrid, Trajectory, Zone, ZoneMap

CFG = DetectorConfig(xi_threshold=0.4)


def dyn(zone_id=1, u=(1.0, 0.0), dt=1.0, q=0.0, r=0.01):
    return ZoneDynamics(zone_id=zone_id, u=np.array(u), dt=dt, q=q, r=r)


def single_zone_world(width=200, height=200, origin=(-100.0, -100.0), u=(1.0, 0.0),
                      dt=1.0, q=0.0, r=0.01):
    grid = SpatialGrid(origin=origin, cell_size=1.0, width=width, height=height)
    cells = tuple(range(grid.n_cells))
    zone = Zone(id=1, cells=cells, u=np.array(u), group="straight")
    zmap = ZoneMap(zones=(zone,), cell_to_zone=np.ones(grid.n_cells, dtype=np.int64))
    return grid, zmap, {1: ZoneDynamics(zone_id=1, u=np.array(u), dt=dt, q=q, r=r)}


class TestPredict:
    def test_moves_along_u(self):
        s = KfState(x=np.zeros(2), P=np.eye(2), zone_id=1)
        out = kf_predict(s, dyn(u=(1, 0), dt=1.0, q=0.0))
        assert np.allclose(out.x, [1, 0])
        assert np.allclose(out.P, s.P)

    def test_zero_u_grows_covariance_only(self):
        s = KfState(x=np.array([2.0, 3.0]), P=np.eye(2), zone_id=1)
        out = kf_predict(s, dyn(u=(0, 0), q=0.5))
        assert np.allclose(out.x, s.x)
        assert np.allclose(out.P, np.eye(2) * 1.5)

    def test_two_predicts_compose(self):
        s = KfState(x=np.zeros(2), P=np.eye(2), zone_id=1)
        twice = kf_predict(kf_predict(s, dyn(dt=0.5, q=0.1)), dyn(dt=0.5, q=0.1))
        once = kf_predict(s, dyn(dt=1.0, q=0.2))
        assert np.allclose(twice.x, once.x)
        assert np.allclose(twice.P, once.P)

    def test_zone_mismatch(self):
        s = KfState(x=np.zeros(2), P=np.eye(2), zone_id=2)
        with pytest.raises(ValueError, match="zone"):
            kf_predict(s, dyn(zone_id=1))


class TestUpdate:
    def test_zero_innovation(self):
        s = KfState(x=np.array([1.0, 2.0]), P=np.eye(2), zone_id=1)
        _, rec = kf_update(s, np.array([1.0, 2.0]), dyn(), CFG)
        assert rec.xi == 0.0
        assert not rec.abnormal

    def test_hand_arithmetic_triggers_threshold(self):
        s = KfState(x=np.array([1.0, 0.0]), P=0.01 * np.eye(2), zone_id=1)
        _, rec = kf_update(s, np.array([1.3, 0.4]), dyn(), CFG)
        assert np.allclose(rec.eps, [0.3, 0.4])
        assert rec.xi == pytest.approx(0.5)
        assert rec.abnormal

    def test_infinite_r_keeps_state(self):
        s = KfState(x=np.array([1.0, 0.0]), P=np.eye(2), zone_id=1)
        out, _ = kf_update(s, np.array([9.0, 9.0]), dyn(r=1e12), CFG)
        assert np.max(np.abs(out.x - s.x)) < 1e-6

    def test_nonfinite_measurement(self):
        s = KfState(x=np.zeros(2), P=np.eye(2), zone_id=1)
        with pytest.raises(ValueError, match="finite"):
            kf_update(s, np.array([np.nan, 0.0]), dyn(), CFG)

    def test_covariance_stays_psd(self):
        rng = np.random.default_rng(0)
        s = KfState(x=np.zeros(2), P=0.25 * np.eye(2), zone_id=1)
        d = dyn(u=(0.3, -0.2), dt=0.5, q=0.01, r=0.05)
        for _ in range(200):
            s = kf_predict(s, d)
            s, _ = kf_update(s, s.x + rng.normal(0, 0.2, 2), d, CFG)
            w = np.linalg.eigvalsh(s.P)
            assert np.all(w >= -1e-10)
            assert np.allclose(s.P, s.P.T)


class TestRunBank:
    def test_model_consistent_noiseless_data_zero_xi(self):
        grid, zmap, dyns = single_zone_world(u=(0.5, 0.25), dt=1.0, q=0.0)
        ks = np.arange(40)
        pos = np.array([0.0, 0.0]) + np.outer(ks, [0.5, 0.25])
        traj = Trajectory(k=ks, t=ks * 1.0, pos=pos, dt=1.0)
        records = run_bank(traj, zmap, grid, dyns, CFG)
        assert len(records) == 39
        assert all(r.xi < 1e-9 for r in records)
        assert not any(r.abnormal for r in records)

    def test_innovation_whiteness_on_consistent_data(self):
        # state-space simulation matching the filter model exactly
        q, r = 0.004, 0.01
        grid, zmap, dyns = single_zone_world(u=(0.08, 0.03), dt=1.0, q=q, r=r)
        rng = np.random.default_rng(123)
        n = 700
        x = np.zeros(2)
        zs = np.empty((n, 2))
        for i in range(n):
            zs[i] = x + rng.normal(0, np.sqrt(r), 2)
            x = x + np.array([0.08, 0.03]) + rng.normal(0, np.sqrt(q), 2)
        ks = np.arange(n)
        traj = Trajectory(k=ks, t=ks * 1.0, pos=zs, dt=1.0)
        records = run_bank(traj, zmap, grid, dyns, CFG)
        eps = np.array([rec.eps for rec in records[20:]])  # skip transient
        assert len(eps) >= 500
        for c in range(2):
            e = eps[:, c] - eps[:, c].mean()
            rho1 = (e[1:] @ e[:-1]) / (e @ e)
            assert abs(rho1) < 0.2

    def test_rotation_invariance_of_xi(self):
        theta = np.radians(37.0)
        R = np.array([[np.cos(theta), -np.sin(theta)],
                      [np.sin(theta), np.cos(theta)]])
        rng = np.random.default_rng(5)
        u = np.array([0.4, 0.1])
        ks = np.arange(60)
        pos = np.outer(ks, u) + rng.normal(0, 0.3, size=(60, 2))
        traj = Trajectory(k=ks, t=ks * 1.0, pos=pos, dt=1.0)
        grid, zmap, dyns = single_zone_world(u=u, q=0.01, r=0.05)
        rec_a = run_bank(traj, zmap, grid, dyns, CFG)

        pos_rot = pos @ R.T
        traj_rot = Trajectory(k=ks, t=ks * 1.0, pos=pos_rot, dt=1.0)
        grid2, zmap2, dyns2 = single_zone_world(u=R @ u, q=0.01, r=0.05)
        rec_b = run_bank(traj_rot, zmap2, grid2, dyns2, CFG)
        xi_a = np.array([rec.xi for rec in rec_a])
        xi_b = np.array([rec.xi for rec in rec_b])
        assert np.max(np.abs(xi_a - xi_b)) < 1e-9

    def test_records_one_per_sample_after_first(self):
        grid, zmap, dyns = single_zone_world()
        ks = np.arange(25)
        traj = Trajectory(k=ks, t=ks * 1.0, pos=np.outer(ks, [1.0, 0.0]), dt=1.0)
        records = run_bank(traj, zmap, grid, dyns, CFG)
        assert [r.k for r in records] == list(ks[1:])

    def test_out_of_support_marker_and_reinit(self):
        grid = SpatialGrid(origin=(0.0, 0.0), cell_size=1.0, width=6, height=1)
        # zone covers only the first three columns
        zone = Zone(id=1, cells=(0, 1, 2), u=np.array([1.0, 0.0]), group="straight")
        c2z = np.array([1, 1, 1, 0, 0, 0], dtype=np.int64)
        zmap = ZoneMap(zones=(zone,), cell_to_zone=c2z)
        dyns = {1: dyn(u=(1.0, 0.0), dt=1.0, q=0.0, r=0.01)}
        ks = np.arange(6)
        pos = np.column_stack([ks + 0.5, np.full(6, 0.5)])
        traj = Trajectory(k=ks, t=ks * 1.0, pos=pos, dt=1.0)
        records = run_bank(traj, zmap, grid, dyns, CFG)
        assert len(records) == 5
        in_support = records[:2]
        out = records[2:]
        assert all(not r.out_of_support for r in in_support)
        assert all(r.out_of_support and r.abnormal and r.xi == OUT_OF_SUPPORT_XI
                   for r in out)

    def test_entirely_outside_grid(self):
        grid, zmap, dyns = single_zone_world(width=2, height=2, origin=(0.0, 0.0))
        ks = np.arange(3)
        pos = np.full((3, 2), 50.0)
        traj = Trajectory(k=ks, t=ks * 1.0, pos=pos, dt=1.0)
        with pytest.raises(ValueError, match="outside grid bounds"):
            run_bank(traj, zmap, grid, dyns, CFG)

    def test_zone_handoff_keeps_state(self):
        # two zones side by side with the same dynamics: crossing the border
        # must not disturb the innovation sequence
        grid = SpatialGrid(origin=(0.0, 0.0), cell_size=5.0, width=2, height=1)
        u = np.array([1.0, 0.0])
        za = Zone(id=1, cells=(0,), u=u, group="straight")
        zb = Zone(id=2, cells=(1,), u=u, group="straight")
        zmap = ZoneMap(zones=(za, zb), cell_to_zone=np.array([1, 2], dtype=np.int64))
        dyns = {1: dyn(1, u=u, q=0.001, r=0.01), 2: dyn(2, u=u, q=0.001, r=0.01)}
        ks = np.arange(9)
        pos = np.column_stack([0.5 + ks.astype(float), np.full(9, 2.0)])
        traj = Trajectory(k=ks, t=ks * 1.0, pos=pos, dt=1.0)
        records = run_bank(traj, zmap, grid, dyns, CFG)
        assert all(r.xi < 1e-9 for r in records)
        assert {r.zone_id for r in records} == {1, 2}


class TestRecordsCsv:
    def test_round_trip(self, tmp_path):
        records = [
            InnovationRecord(k=1, t=0.1, zone_id=3, eps=np.array([0.3, 0.4]),
                             xi=0.5, abnormal=True),
            InnovationRecord(k=2, t=0.2, zone_id=None, eps=np.array([np.nan, np.nan]),
                             xi=OUT_OF_SUPPORT_XI, abnormal=True, out_of_support=True),
        ]
        path = tmp_path / "inn.csv"
        write_innovations_csv(records, path)
        back = read_innovations_csv(path)
        assert back[0].k == 1 and back[0].zone_id == 3 and back[0].xi == 0.5
        assert back[1].zone_id is None and back[1].out_of_support
        assert back[1].xi == OUT_OF_SUPPORT_XI
        assert np.isnan(back[1].eps).all()


class TestAbnormalRuns:
    def test_runs_split_on_gaps_and_normals(self):
        def rec(k, ab):
            return InnovationRecord(k=k, t=float(k), zone_id=1,
                                    eps=np.zeros(2), xi=0.0, abnormal=ab)

        records = [rec(1, True), rec(2, True), rec(3, False), rec(4, True),
                   rec(6, True), rec(7, False)]
        assert abnormal_runs(records) == [(1, 2), (4, 4), (6, 6)]
