import numpy as np
import pytest

from voxinr.cli import main
from voxinr.io import load_checkpoint, read_pgm, read_volz, write_volz
from voxinr.volume import MultiGridVolume


def run_cli(*args):
    return main([str(a) for a in args])


TRAIN_FAST = [
    "--epochs", "2", "--fourier-features", "8", "--hidden-layers", "2",
    "--hidden-width", "8", "--batch-size", "256", "--learning-rate", "1e-3",
]


@pytest.fixture(scope="module")
def volume_file(tmp_path_factory):
    path = tmp_path_factory.getbasetemp() / "fire.volz"
    assert run_cli("gen", "--dims", "16,16,24", "--seed", "7", "--carve-quadrant",
                   "-o", path) == 0
    return path


class TestGen:
    def test_roundtrip_dims(self, volume_file):
        vol, _ = read_volz(volume_file)
        assert vol.dims == (16, 16, 24)
        assert vol.names == ("density", "temperature")

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.volz"
        b = tmp_path / "b.volz"
        for path in (a, b):
            assert run_cli("gen", "--dims", "16,16,16", "--seed", "3", "-o", path) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_below_minimum_dims_is_usage_error(self, tmp_path, capsys):
        code = run_cli("gen", "--dims", "4,4,4", "-o", tmp_path / "x.volz")
        assert code == 2
        assert "at least" in capsys.readouterr().err

    def test_bad_dims_string(self, tmp_path):
        assert run_cli("gen", "--dims", "16x16x16", "-o", tmp_path / "x.volz") == 2


class TestTrain:
    def test_checkpoint_echoes_flags(self, volume_file, tmp_path):
        out = tmp_path / "m.ckpt"
        code = run_cli("train", volume_file, "--mask", "dilated:5", "--seed", "1",
                       *TRAIN_FAST, "-o", out)
        assert code == 0
        ckpt = load_checkpoint(out)
        assert ckpt.config.seed == 1
        assert ckpt.config.epochs == 2
        assert ckpt.config.fourier_features == 8
        assert ckpt.dims == (16, 16, 24)
        assert ckpt.normalization is not None

    def test_empty_mask_is_data_error(self, tmp_path, capsys):
        zero = MultiGridVolume.from_grids((8, 8, 8), [("density", np.zeros(512))])
        path = tmp_path / "zero.volz"
        write_volz(path, zero)
        code = run_cli("train", path, "--mask", "avm", *TRAIN_FAST,
                       "-o", tmp_path / "m.ckpt")
        assert code == 3
        assert "empty training set" in capsys.readouterr().err

    def test_unknown_mask_mode_is_usage_error(self, volume_file, tmp_path, capsys):
        code = run_cli("train", volume_file, "--mask", "sphere", *TRAIN_FAST,
                       "-o", tmp_path / "m.ckpt")
        assert code == 2
        assert "unknown mask mode" in capsys.readouterr().err

    def test_row_counts_ordered_by_mask(self, volume_file, tmp_path, capsys):
        counts = {}
        for mask in ("bbx", "dilated:1", "avm"):
            run_cli("train", volume_file, "--mask", mask, *TRAIN_FAST,
                    "-o", tmp_path / f"{mask.replace(':', '_')}.ckpt")
            header = capsys.readouterr().out.splitlines()[0]
            counts[mask] = int(header.rsplit(":", 1)[1].split("of")[0])
        assert counts["bbx"] > counts["dilated:1"] > counts["avm"]

    def test_loss_csv_written(self, volume_file, tmp_path):
        out_csv = tmp_path / "loss.csv"
        run_cli("train", volume_file, "--mask", "avm", *TRAIN_FAST,
                "-o", tmp_path / "m.ckpt", "--loss-csv", out_csv)
        lines = out_csv.read_text().strip().splitlines()
        assert lines[0] == "epoch,mean_loss,seconds_elapsed"
        assert len(lines) == 3

    def test_determinism_identical_loss_csv(self, volume_file, tmp_path):
        csvs = []
        for tag in ("a", "b"):
            out_csv = tmp_path / f"{tag}.csv"
            run_cli("train", volume_file, "--mask", "avm", "--seed", "5", *TRAIN_FAST,
                    "-o", tmp_path / f"{tag}.ckpt", "--loss-csv", out_csv)
            losses = [
                line.split(",")[1]
                for line in out_csv.read_text().strip().splitlines()[1:]
            ]
            csvs.append(losses)
        assert csvs[0] == csvs[1]


@pytest.fixture(scope="module")
def checkpoint(volume_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval") / "m.ckpt"
    run_cli("train", volume_file, "--mask", "dilated:2", "--seed", "2",
            *TRAIN_FAST, "-o", out)
    return out


class TestEval:
    def test_score_in_range(self, checkpoint, volume_file, tmp_path, capsys):
        csv_path = tmp_path / "report.csv"
        assert run_cli("eval", checkpoint, volume_file, "--csv", csv_path) == 0
        out = capsys.readouterr().out
        assert "Score" in out
        row = csv_path.read_text().strip().splitlines()[1].split(",")
        score = float(row[4])
        assert 0.0 < score <= 1.0

    def test_region_stats_printed(self, checkpoint, volume_file, capsys):
        assert run_cli("eval", checkpoint, volume_file, "--region", "0:8,0:8,0:24") == 0
        out = capsys.readouterr().out
        assert "mean_predicted" in out
        assert "density" in out

    def test_bad_region_is_usage_error(self, checkpoint, volume_file):
        assert run_cli("eval", checkpoint, volume_file, "--region", "0:99,0:8,0:8") == 2

    def test_dims_mismatch_is_data_error(self, checkpoint, tmp_path, capsys):
        other = tmp_path / "other.volz"
        run_cli("gen", "--dims", "8,8,8", "--seed", "1", "-o", other)
        assert run_cli("eval", checkpoint, other) == 3
        assert "do not match" in capsys.readouterr().err


class TestSweep:
    def test_table_and_csv(self, volume_file, tmp_path, capsys):
        csv_path = tmp_path / "sweep.csv"
        code = run_cli("sweep", volume_file, "--variants", "avm,dilated:1,bbx",
                       *TRAIN_FAST, "--seed", "3", "--csv", csv_path)
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        header_at = next(i for i, l in enumerate(lines) if l.startswith("variant"))
        table = lines[header_at : header_at + 4]
        assert [row.split()[0] for row in table] == ["variant", "AVM", "dilated:1", "BBX"]
        rows = csv_path.read_text().strip().splitlines()
        assert rows[0].startswith("variant,")
        assert [r.split(",")[0] for r in rows[1:]] == ["AVM", "dilated:1", "BBX"]

    def test_duplicate_variant_is_usage_error(self, volume_file):
        assert run_cli("sweep", volume_file, "--variants", "avm,avm", *TRAIN_FAST) == 2


class TestSlice:
    def test_volume_slice(self, volume_file, tmp_path):
        out = tmp_path / "s.pgm"
        assert run_cli("slice", volume_file, "--z", "12", "--grid", "density",
                       "-o", out) == 0
        img = read_pgm(out)
        assert img.shape == (16, 16)
        # the carved quadrant stays dark in every slice
        assert not img[:8, :8].any()

    def test_checkpoint_slice(self, volume_file, tmp_path):
        ckpt = tmp_path / "m.ckpt"
        run_cli("train", volume_file, "--mask", "avm", *TRAIN_FAST, "-o", ckpt)
        out = tmp_path / "s.pgm"
        assert run_cli("slice", ckpt, "--z", "0", "--grid", "density", "-o", out) == 0
        assert read_pgm(out).shape == (16, 16)

    def test_out_of_range_z(self, volume_file, tmp_path):
        assert run_cli("slice", volume_file, "--z", "99", "--grid", "density",
                       "-o", tmp_path / "s.pgm") == 2

    def test_unknown_grid(self, volume_file, tmp_path):
        assert run_cli("slice", volume_file, "--z", "0", "--grid", "pressure",
                       "-o", tmp_path / "s.pgm") == 2

    def test_all_zero_volume_slice_is_black(self, tmp_path):
        zero = MultiGridVolume.from_grids((12, 12, 12), [("density", np.zeros(12**3))])
        path = tmp_path / "zero.volz"
        write_volz(path, zero)
        out = tmp_path / "z.pgm"
        assert run_cli("slice", path, "--z", "6", "--grid", "density", "-o", out) == 0
        assert not read_pgm(out).any()


class TestGlobalFlags:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("--version")
        assert exc.value.code == 0

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run_cli()
        assert exc.value.code == 2

    def test_threads_flag_accepted(self, tmp_path):
        assert run_cli("gen", "--dims", "8,8,8", "--threads", "2",
                       "--strict-determinism", "-o", tmp_path / "v.volz") == 0
