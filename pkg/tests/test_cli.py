"""End-to-end command line tests driven through main(argv)."""

import json

import numpy as np
import pytest

from conftest import build_corpus
from occlumix import FlowField, ImageBuffer, load_texture_pools
from occlumix.cli import main
from occlumix.formats import load_image, save_feature_stack, save_flow, save_image
from occlumix.losses import builtin_feature_stack


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """A classified corpus: manifest, pools, dist, defects, classify rows."""
    root = tmp_path_factory.mktemp("cli")
    manifest = build_corpus(root, 6)
    pools = root / "pools.json"
    rows_path = root / "rows.jsonl"
    code = main(["classify", "--manifest", str(manifest),
                 "--pools", str(pools), "--out", str(rows_path)])
    assert code == 0
    return {
        "root": root,
        "manifest": manifest,
        "pools": pools,
        "rows": rows_path,
        "dist": root / "dist.json",
        "palette": root / "palette.json",
        "defects": root / "defects",
    }


class TestParsing:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_no_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["classify", "--manifest", "m.json", "--frobnicate"])
        assert exc.value.code == 1

    def test_missing_required_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["warp", "--source", "a.png"])
        assert exc.value.code == 1


class TestClassify:
    def test_rows_schema(self, cli_env):
        rows = [json.loads(line) for line in cli_env["rows"].read_text().splitlines()]
        assert len(rows) == 6
        for row in rows:
            assert set(row) == {"id", "entropy", "label", "masked"}
            assert row["label"] in ("simple", "complex")
        assert [r["id"] for r in rows] == [f"e{i:03d}" for i in range(6)]

    def test_pools_written(self, cli_env):
        pools = load_texture_pools(cli_env["pools"])
        assert set(pools.complex_ids) == {"e001", "e003", "e005"}
        assert set(pools.simple_ids) == {"e000", "e002", "e004"}

    def test_stdout_default(self, cli_env, capsys):
        code = main(["classify", "--manifest", str(cli_env["manifest"])])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 6
        json.loads(lines[0])

    def test_zero_threshold_makes_everything_complex(self, cli_env, capsys):
        code = main(["classify", "--manifest", str(cli_env["manifest"]),
                     "--threshold", "0"])
        assert code == 0
        rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert all(row["label"] == "complex" for row in rows)

    def test_negative_seed_exits_one(self, cli_env):
        assert main(["classify", "--manifest", str(cli_env["manifest"]),
                     "--seed", "-4"]) == 1

    def test_missing_manifest_exits_one(self, tmp_path):
        assert main(["classify", "--manifest", str(tmp_path / "none.json")]) == 1


class TestAugment:
    def run(self, cli_env, out, extra=()):
        return main(["augment",
                     "--manifest", str(cli_env["manifest"]),
                     "--pools", str(cli_env["pools"]),
                     "--dist", str(cli_env["dist"]),
                     "--seed", "9", "--out", str(out), *extra])

    def test_report_and_outputs(self, cli_env, tmp_path):
        out = tmp_path / "aug"
        assert self.run(cli_env, out) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["command"] == "augment"
        assert report["seed"] == 9
        assert report["ok"] + report["skipped"] == 6
        assert report["ok"] >= 1
        assert [r["id"] for r in report["rows"]] == [f"e{i:03d}" for i in range(6)]
        for row in report["rows"]:
            if row["status"] == "ok":
                for name in row["outputs"].values():
                    assert (out / name).is_file()

    def test_thread_count_never_changes_bytes(self, cli_env, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self.run(cli_env, a, ("--threads", "1")) == 0
        assert self.run(cli_env, b, ("--threads", "4")) == 0
        names_a = sorted(p.name for p in a.iterdir())
        names_b = sorted(p.name for p in b.iterdir())
        assert names_a == names_b and len(names_a) > 1
        for name in names_a:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_missing_dist_exits_one(self, cli_env, tmp_path):
        code = main(["augment", "--manifest", str(cli_env["manifest"]),
                     "--pools", str(cli_env["pools"]),
                     "--out", str(tmp_path / "x")])
        assert code == 1


class TestMaskops:
    def test_outputs(self, cli_env, tmp_path):
        out = tmp_path / "mask"
        code = main(["maskops",
                     "--manifest", str(cli_env["manifest"]),
                     "--palette", str(cli_env["palette"]),
                     "--defects-dir", str(cli_env["defects"]),
                     "--seed", "3", "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["ok"] == 6
        assert report["cloth_ids"] == [3]
        assert report["body_ids"] == [1, 2, 4, 5, 6]
        for row in report["rows"]:
            assert set(row["outputs"]) == {
                "potential_body", "target_body", "degraded_body", "degraded_cloth"}
            for name in row["outputs"].values():
                assert (out / name).is_file()

    def test_empty_defects_dir_exits_one(self, cli_env, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["maskops",
                     "--manifest", str(cli_env["manifest"]),
                     "--palette", str(cli_env["palette"]),
                     "--defects-dir", str(empty),
                     "--out", str(tmp_path / "o")])
        assert code == 1


class TestWarp:
    def test_zero_flow_round_trip(self, cli_env, tmp_path):
        src = cli_env["root"] / "e000_person.png"
        flow_path = tmp_path / "zero.flo2"
        save_flow(flow_path, FlowField(np.zeros((48, 32, 2))))
        out = tmp_path / "warped.png"
        code = main(["warp", "--source", str(src),
                     "--flow", str(flow_path), "--out", str(out)])
        assert code == 0
        assert (load_image(out).data == load_image(src).data).all()

    def test_missing_flow_exits_one(self, cli_env, tmp_path):
        code = main(["warp", "--source", str(cli_env["root"] / "e000_person.png"),
                     "--flow", str(tmp_path / "none.flo2"),
                     "--out", str(tmp_path / "o.png")])
        assert code == 1


class TestSmoothness:
    def test_constant_flow_report(self, tmp_path, capsys):
        flow_path = tmp_path / "const.flo2"
        save_flow(flow_path, FlowField(np.full((6, 5, 2), 1.25)))
        code = main(["smoothness", "--flow", str(flow_path),
                     "--epsilon", "0.5", "--alpha", "0.5"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["levels"] == [[6, 5]]
        # every second difference of a constant flow is zero, so each term
        # contributes epsilon^(2*alpha) = 0.5
        assert report["value"] == pytest.approx(report["terms"] * 0.5, rel=1e-12)

    def test_tiny_scale_exits_two(self, tmp_path):
        flow_path = tmp_path / "tiny.flo2"
        save_flow(flow_path, FlowField(np.zeros((2, 2, 2))))
        assert main(["smoothness", "--flow", str(flow_path)]) == 2


class TestLoss:
    def _images(self, tmp_path):
        gen = tmp_path / "gen.png"
        ref = tmp_path / "ref.png"
        save_image(gen, ImageBuffer(np.ones((16, 12, 3))))
        save_image(ref, ImageBuffer(np.zeros((16, 12, 3))))
        return gen, ref

    def test_builtin_features(self, tmp_path, capsys):
        gen, ref = self._images(tmp_path)
        code = main(["loss", "--gen", str(gen), "--ref", str(ref)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["features"] == "builtin"
        assert report["l1"] == pytest.approx(1.0)
        assert report["perceptual"] > 0.0
        assert report["combined"] == pytest.approx(
            report["l1"] + report["perceptual"], rel=1e-12)

    def test_identical_images_zero(self, tmp_path, capsys):
        gen, _ = self._images(tmp_path)
        code = main(["loss", "--gen", str(gen), "--ref", str(gen)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["l1"] == 0.0
        assert report["perceptual"] == 0.0
        assert report["combined"] == 0.0

    def test_feature_files(self, tmp_path, capsys):
        gen, ref = self._images(tmp_path)
        gf, rf = tmp_path / "g.ften", tmp_path / "r.ften"
        save_feature_stack(gf, builtin_feature_stack(load_image(gen), 7))
        save_feature_stack(rf, builtin_feature_stack(load_image(ref), 7))
        code = main(["loss", "--gen", str(gen), "--ref", str(ref),
                     "--gen-features", str(gf), "--ref-features", str(rf)])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["features"] == "files"

    def test_one_sided_features_exits_one(self, tmp_path):
        gen, ref = self._images(tmp_path)
        code = main(["loss", "--gen", str(gen), "--ref", str(ref),
                     "--gen-features", str(tmp_path / "g.ften")])
        assert code == 1

    def test_overflow_exits_two(self, tmp_path):
        gen, ref = self._images(tmp_path)
        big = "1.7976931348623157e308"
        code = main(["loss", "--gen", str(gen), "--ref", str(ref),
                     "--alpha-l", big, "--alpha-p", big])
        assert code == 2


class TestFid:
    def test_identical_corpora_near_zero(self, cli_env, tmp_path, capsys):
        from test_fid import _write_features
        regions = {"upper": [5], "head": [1]}
        features = _write_features(cli_env["root"], cli_env["manifest"], regions)
        regions_path = tmp_path / "regions.json"
        regions_path.write_text(json.dumps(regions))
        code = main(["fid",
                     "--real-manifest", str(cli_env["manifest"]),
                     "--gen-manifest", str(cli_env["manifest"]),
                     "--features-dir", str(features),
                     "--regions", str(regions_path),
                     "--crop-size", "16"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report["rows"]) == {"upper", "head", "overall"}
        for value in report["rows"].values():
            assert abs(value) < 1e-6

    def test_missing_features_dir_exits_one(self, cli_env, tmp_path):
        regions_path = tmp_path / "regions.json"
        regions_path.write_text(json.dumps({"upper": [5]}))
        code = main(["fid",
                     "--real-manifest", str(cli_env["manifest"]),
                     "--gen-manifest", str(cli_env["manifest"]),
                     "--features-dir", str(tmp_path / "nowhere"),
                     "--regions", str(regions_path)])
        assert code == 1


class TestStats:
    def test_frequencies_sum_to_one(self, cli_env, capsys):
        code = main(["stats", "--manifest", str(cli_env["manifest"]),
                     "--palette", str(cli_env["palette"])])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert sum(report["class_frequencies"].values()) == pytest.approx(1.0)
        assert "upper-clothes" in report["class_frequencies"]
        assert report["skipped"] == []


class TestConfigPlumbing:
    def test_config_supplies_defaults(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"epsilon": 0.5, "alpha": 0.5}))
        flow_path = tmp_path / "f.flo2"
        save_flow(flow_path, FlowField(np.zeros((4, 4, 2))))
        code = main(["smoothness", "--flow", str(flow_path), "--config", str(config)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert (report["epsilon"], report["alpha"]) == (0.5, 0.5)

    def test_flag_overrides_config(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"epsilon": 0.5}))
        flow_path = tmp_path / "f.flo2"
        save_flow(flow_path, FlowField(np.zeros((4, 4, 2))))
        code = main(["smoothness", "--flow", str(flow_path),
                     "--config", str(config), "--epsilon", "0.25"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["epsilon"] == 0.25

    def test_unknown_config_key_exits_one(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"velocity": 11}))
        flow_path = tmp_path / "f.flo2"
        save_flow(flow_path, FlowField(np.zeros((4, 4, 2))))
        assert main(["smoothness", "--flow", str(flow_path),
                     "--config", str(config)]) == 1


class TestIoFailures:
    def test_unwritable_report_exits_one(self, tmp_path):
        flow_path = tmp_path / "f.flo2"
        save_flow(flow_path, FlowField(np.zeros((4, 4, 2))))
        code = main(["smoothness", "--flow", str(flow_path),
                     "--out", str(tmp_path / "missing_dir" / "report.json")])
        assert code == 1
