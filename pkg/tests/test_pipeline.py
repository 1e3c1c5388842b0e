import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from normotion import pipeline
from normotion.pipeline import (ConfigError, DataError, ModelVersionError,
                                cmd_detect, cmd_fuse, cmd_report,
                                cmd_simulate, cmd_train, load_config, load_model)


def dirs_cfg(tmp_path, **overrides):
    base = {"data_dir": str(tmp_path / "data"), "model_dir": str(tmp_path / "model"),
            "out_dir": str(tmp_path / "out"), "seed": 0}
    base.update(overrides)
    return load_config(None, base)


def tree_hash(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestConfig:
    def test_defaults_load(self):
        cfg = load_config(None)
        assert cfg.detector_xi_threshold == 0.4
        assert cfg.grid_cell_size == 0.5

    def test_file_parsing(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nseed=9\ngp.length_scale=2.5\n"
                     "scene.render_frames=true\nslic.n_superpixels=8\n")
        cfg = load_config(p)
        assert cfg.seed == 9
        assert cfg.gp_length_scale == 2.5
        assert cfg.scene_render_frames is True
        assert cfg.slic_n_superpixels == 8

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("gp.wibble=1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(p)

    def test_bad_value(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed=banana\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.cfg")

    def test_invalid_threshold(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("detector.xi_threshold=-1\n")
        with pytest.raises(ConfigError):
            load_config(p)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    cfg = load_config(None, {"data_dir": str(tmp / "data"), "model_dir": str(tmp / "model"),
                             "out_dir": str(tmp / "out"), "seed": 0})
    cmd_simulate(cfg)
    model = cmd_train(cfg)
    return tmp, cfg, model


class TestTrain:
    def test_golden_zone_groups_on_defaults(self, trained):
        _, _, model = trained
        groups = model.zone_groups()
        assert len(groups["set1"]) >= 4  # straight zones
        assert len(groups["set2"]) >= 4  # curve zones

    def test_empty_data_dir(self, tmp_path):
        cfg = dirs_cfg(tmp_path)
        with pytest.raises(DataError, match="no trajectories"):
            cmd_train(cfg)

    def test_model_round_trip_is_consistent(self, trained):
        tmp, cfg, model = trained
        loaded = load_model(cfg.model_dir)
        assert len(loaded.zmap.zones) == len(model.zmap.zones)
        assert np.array_equal(loaded.zmap.cell_to_zone, model.zmap.cell_to_zone)
        assert loaded.dt == model.dt
        for z1, z2 in zip(loaded.zmap.zones, model.zmap.zones):
            assert z1.cells == z2.cells and z1.group == z2.group
            assert np.allclose(z1.u, z2.u, atol=0)

    def test_save_load_save_identical_bytes(self, trained, tmp_path):
        tmp, cfg, model = trained
        loaded = load_model(cfg.model_dir)
        pipeline.save_model(loaded, tmp_path / "resaved")
        assert tree_hash(Path(cfg.model_dir)) == tree_hash(tmp_path / "resaved")

    def test_version_mismatch(self, trained, tmp_path):
        tmp, cfg, _ = trained
        import shutil

        broken = tmp_path / "broken_model"
        shutil.copytree(cfg.model_dir, broken)
        manifest = json.loads((broken / "manifest.json").read_text())
        manifest["format_version"] = 99
        (broken / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ModelVersionError, match="99"):
            load_model(broken)


class TestDeterminism:
    def test_train_and_detect_rerun_byte_identical(self, tmp_path):
        hashes = []
        for run in ("a", "b"):
            root = tmp_path / run
            cfg = load_config(None, {"data_dir": str(root / "data"),
                                     "model_dir": str(root / "model"),
                                     "out_dir": str(root / "out"), "seed": 7})
            cmd_simulate(cfg)
            cmd_train(cfg)
            cmd_detect(cfg)
            hashes.append((tree_hash(root / "data"), tree_hash(root / "model"),
                           tree_hash(root / "out")))
        assert hashes[0] == hashes[1]


class TestDetect:
    def test_summary_and_outputs(self, trained):
        tmp, cfg, _ = trained
        summary = cmd_detect(cfg)
        names = [e["name"] for e in summary["trajectories"]]
        assert names == sorted(names)
        assert len(names) == cfg.scene_test_n_laps
        for e in summary["trajectories"]:
            assert (Path(cfg.out_dir) / f"innovations_{e['name']}.csv").exists()
        # model directory untouched by detect
        before = tree_hash(Path(cfg.model_dir))
        cmd_detect(cfg)
        assert tree_hash(Path(cfg.model_dir)) == before

    def test_out_of_support_flagging(self, trained, tmp_path):
        tmp, cfg_shared, _ = trained
        cfg = load_config(None, {"data_dir": cfg_shared.data_dir,
                                 "model_dir": cfg_shared.model_dir,
                                 "out_dir": str(tmp_path / "out")})
        from normotion.model import Trajectory, write_trajectory_csv

        ks = np.arange(30)
        pos = np.column_stack([4.0 + 0.1 * ks, np.full(30, 2.0)])
        pos[15:20] += np.array([0.0, 40.0])  # leaves the arena
        stray = tmp_path / "stray.csv"
        write_trajectory_csv(Trajectory(k=ks, t=ks * 0.1, pos=pos, dt=0.1), stray)
        summary = cmd_detect(cfg, [stray])
        entry = summary["trajectories"][0]
        assert entry["n_out_of_support"] >= 5

    def test_no_test_data(self, tmp_path, trained):
        _, cfg_trained, _ = trained
        cfg = dirs_cfg(tmp_path, model_dir=cfg_trained.model_dir)
        with pytest.raises(DataError, match="no test trajectories"):
            cmd_detect(cfg)


def write_pl_csv(path, rows, with_fused=True):
    import csv

    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["k", "group", "s_o", "s_f", "s_po", "s_pf", "y_tilde"]
        if with_fused:
            header += ["fused_y", "abnormal"]
        w.writerow(header)
        for r in rows:
            w.writerow(r)


class TestFuse:
    def test_min_rule_applied_without_fused_column(self, trained, tmp_path):
        tmp, cfg, _ = trained
        cmd_detect(cfg)
        sl = Path(cfg.out_dir) / "innovations_lap_01.csv"
        pl = tmp_path / "pl.csv"
        write_pl_csv(pl, [[1, "set1", 0.1, 0.2, 0.1, 0.2, 0.8],
                          [1, "set2", 0.1, 0.2, 0.1, 0.2, 0.3]], with_fused=False)
        stats = cmd_fuse(cfg, sl, pl)
        fused = (Path(cfg.out_dir) / "fused_innovations_lap_01.csv").read_text().splitlines()
        row_k1 = fused[1].split(",")
        assert row_k1[0] == "1"
        assert float(row_k1[4]) == pytest.approx(0.3)

    def test_sl_only_completes(self, trained):
        tmp, cfg, _ = trained
        cmd_detect(cfg)
        sl = Path(cfg.out_dir) / "innovations_lap_00.csv"
        stats = cmd_fuse(cfg, sl, None)
        assert stats["pl"] is None
        out = (Path(cfg.out_dir) / "fused_innovations_lap_00.csv").read_text().splitlines()
        assert out[0] == "k,t,xi,sl_abnormal,y_tilde,pl_abnormal"
        assert out[1].endswith(",,")  # PL columns empty

    def test_identical_intervals_full_overlap(self, trained, tmp_path):
        tmp, cfg, _ = trained
        cmd_detect(cfg)
        sl = Path(cfg.out_dir) / "innovations_lap_01.csv"
        from normotion.kalman import read_innovations_csv

        records = read_innovations_csv(sl)
        rows = []
        for r in records:
            y = 1.0 if r.abnormal else 0.0
            rows.append([r.k, "set1", 0, 0, 0, 0, y, y, 1 if r.abnormal else 0])
            rows.append([r.k, "set2", 0, 0, 0, 0, y, y, 1 if r.abnormal else 0])
        pl = tmp_path / "pl_same.csv"
        write_pl_csv(pl, rows)
        stats = cmd_fuse(cfg, sl, pl)
        assert stats["alignment"]["overlap_ratio"] == pytest.approx(1.0)

    def test_disjoint_ranges_rejected(self, trained, tmp_path):
        tmp, cfg, _ = trained
        cmd_detect(cfg)
        sl = Path(cfg.out_dir) / "innovations_lap_00.csv"
        pl = tmp_path / "pl_off.csv"
        write_pl_csv(pl, [[99999, "set1", 0, 0, 0, 0, 0.5, 0.5, 0]])
        with pytest.raises(DataError, match="disjoint"):
            cmd_fuse(cfg, sl, pl)


class TestReport:
    def test_report_medians_and_detour(self, trained):
        tmp, cfg, _ = trained
        cmd_detect(cfg)
        report = cmd_report(cfg)
        by_name = {e["name"]: e for e in report["trajectories"]}
        avoid = by_name["lap_01"]
        assert avoid["detour"] is not None
        assert len(avoid["detour"]["runs_inside"]) >= 2
        for e in report["trajectories"]:
            if e["name"].startswith("lap_"):
                assert e["median_xi"]["curve"] > e["median_xi"]["straight"]


class TestCli:
    def run_cli(self, *args):
        return subprocess.run([sys.executable, "-m", "normotion.cli", *args],
                              capture_output=True, text=True)

    def test_config_error_exit_2(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("nope=1\n")
        r = self.run_cli("train", "--config", str(p))
        assert r.returncode == 2
        assert "config error" in r.stderr

    def test_data_error_exit_3(self, tmp_path):
        r = self.run_cli("train", "--config", "/dev/null", "--out", str(tmp_path / "m"))
        assert r.returncode == 3

    def test_model_version_error_exit_4(self, trained, tmp_path):
        tmp, cfg, _ = trained
        import shutil

        broken = tmp_path / "bm"
        shutil.copytree(cfg.model_dir, broken)
        manifest = json.loads((broken / "manifest.json").read_text())
        manifest["format_version"] = 99
        (broken / "manifest.json").write_text(json.dumps(manifest))
        p = tmp_path / "c.cfg"
        p.write_text(f"paths.model_dir={broken}\npaths.data_dir={tmp / 'data'}\n"
                     f"paths.out_dir={tmp_path / 'out'}\n")
        r = self.run_cli("detect", "--config", str(p))
        assert r.returncode == 4

    def test_full_cli_pipeline_exit_0(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text(f"paths.data_dir={tmp_path / 'data'}\n"
                     f"paths.model_dir={tmp_path / 'model'}\n"
                     f"paths.out_dir={tmp_path / 'out'}\nseed=3\n")
        for cmd in (("simulate",), ("train",), ("detect",), ("report",)):
            r = self.run_cli(*cmd, "--config", str(p))
            assert r.returncode == 0, (cmd, r.stderr)
        sl = tmp_path / "out" / "innovations_lap_00.csv"
        r = self.run_cli("fuse", "--config", str(p), "--sl", str(sl))
        assert r.returncode == 0
