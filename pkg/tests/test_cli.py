"""Command-line pipeline tests: prep, synth, train, eval, infer, ablate."""

import re

from gaprec.checkpoint import load_checkpoint
from gaprec.cli import main
from gaprec.metrics import EvalReport

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# desk-sized knobs so every pipeline test stays in the sub-second range;
# vocabulary stays above the top evaluation cutoff of 20
SMALL = ["--set", "synth_items=24", "--set", "synth_sessions=40",
         "--set", "session_len=6", "--set", "embed_dim=8",
         "--set", "encoder_dilations=1,2", "--set", "decoder_dilations=1,2",
         "--set", "batch_size=16", "--set", "max_epochs=1",
         "--set", "min_session_len=2"]


def _synth(out, seed=0):
    assert main(["synth", "--out", str(out), "--seed", str(seed)] + SMALL) == 0


def _train(data, out, model="grec", extra=()):
    argv = ["train", "--data", str(data), "--model", model,
            "--out", str(out)] + SMALL + list(extra)
    assert main(argv) == 0


RAW_EVENTS = """\
u1\ta\t1
u2\ta\t1
u1\tb\t2
u3\ta\t1
u2\tb\t2
u1\tc\t3
u3\tb\t2
u1\td\t4
u2\tc\t3
u3\tc\t3
u1\te\t5
u2\td\t4
u3\td\t4
u1\tf\t6
u3\te\t5
u1\tg\t7
u3\tf\t6
u1\th\t8
"""


class TestPrep:
    def _run(self, tmp_path, extra=()):
        raw = tmp_path / "events.tsv"
        raw.write_text(RAW_EVENTS)
        out = tmp_path / "data"
        argv = ["prep", "--input", str(raw), "--out", str(out),
                "--set", "min_item_count=2", "--set", "session_len=4",
                "--set", "min_session_len=2", "--set", "train_frac=0.6",
                "--set", "valid_frac=0.2", "--set", "test_frac=0.2"]
        return main(argv + list(extra)), out

    def test_hand_counted_pipeline(self, tmp_path, capsys):
        """Three users, rare items g/h dropped, five sessions split 3/1/1."""
        code, out = self._run(tmp_path)
        assert code == 0
        counts = {}
        for line in capsys.readouterr().out.splitlines():
            parts = re.split(r"\s{2,}", line.strip())
            if len(parts) == 2:
                counts[parts[0]] = parts[1]
        assert counts == {"users": "3", "events kept": "16",
                          "items (V)": "6", "sessions": "5",
                          "train": "3", "valid": "1", "test": "1"}
        vocab_lines = (out / "vocab.tsv").read_text().splitlines()
        assert vocab_lines[0] == "1\ta"
        assert len(vocab_lines) == 6
        header = (out / "train.txt").read_text().splitlines()[0]
        assert header == "#k=4 V=6"
        for name in ("train.txt", "valid.txt", "test.txt", "config_prep.txt"):
            assert (out / name).exists()

    def test_threshold_wiping_vocabulary_fails(self, tmp_path, capsys):
        code, _ = self._run(tmp_path, ["--set", "min_item_count=99"])
        assert code == 1
        assert "min_item_count" in capsys.readouterr().err

    def test_unknown_override_key_fails(self, tmp_path, capsys):
        code, _ = self._run(tmp_path, ["--set", "sessoin_len=4"])
        assert code == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_config_file_and_override_precedence(self, tmp_path):
        raw = tmp_path / "events.tsv"
        raw.write_text(RAW_EVENTS)
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment line\nmin_item_count = 99\n"
                       "session_len=4\nmin_session_len=2\n"
                       "train_frac=0.6\nvalid_frac=0.2\ntest_frac=0.2\n")
        out = tmp_path / "data"
        code = main(["prep", "--input", str(raw), "--out", str(out),
                     "--config", str(cfg), "--set", "min_item_count=2"])
        assert code == 0
        snapshot = (out / "config_prep.txt").read_text()
        assert "min_item_count=2" in snapshot


class TestSynth:
    def test_deterministic_across_runs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        _synth(a, seed=5)
        _synth(b, seed=5)
        assert (a / "train.txt").read_bytes() == (b / "train.txt").read_bytes()
        assert (a / "test.txt").read_bytes() == (b / "test.txt").read_bytes()

    def test_seed_changes_corpus(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        _synth(a, seed=5)
        _synth(b, seed=6)
        assert (a / "train.txt").read_bytes() != (b / "train.txt").read_bytes()

    def test_split_sizes_and_header(self, tmp_path, capsys):
        out = tmp_path / "d"
        _synth(out)
        text = capsys.readouterr().out
        assert "sessions" in text and "40" in text
        header = (out / "train.txt").read_text().splitlines()[0]
        assert header == "#k=6 V=24"


class TestTrain:
    def test_artifacts_and_stdout(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        _train(data, run)
        text = capsys.readouterr().out
        assert "best_epoch=" in text and "checkpoint=" in text
        assert "mrr5=" in text
        assert (run / "grec.ckpt").exists()
        log = (run / "grec_train_log.csv").read_text().splitlines()
        assert log[0] == "epoch,step,train_loss,val_mrr5"
        assert len(log) == 2
        assert (run / "grec_train_curves.png").read_bytes()[:8] == PNG_MAGIC
        assert (run / "grec_valid_report.txt").exists()
        assert (run / "grec_valid_report.csv").exists()
        assert (run / "config_train_grec.txt").exists()

    def test_same_seed_checkpoints_byte_equal(self, tmp_path):
        data = tmp_path / "d"
        _synth(data)
        r1, r2 = tmp_path / "r1", tmp_path / "r2"
        _train(data, r1, model="nextitnet")
        _train(data, r2, model="nextitnet")
        assert (r1 / "nextitnet.ckpt").read_bytes() == \
            (r2 / "nextitnet.ckpt").read_bytes()

    def test_mostpop_trains_without_gradients(self, tmp_path):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        _train(data, run, model="mostpop")
        model = load_checkpoint(run / "mostpop.ckpt")
        assert model.counts.data.sum() > 0

    def test_missing_data_dir_fails(self, tmp_path, capsys):
        code = main(["train", "--data", str(tmp_path / "nope"),
                     "--model", "grec", "--out", str(tmp_path / "r")] + SMALL)
        assert code == 1
        assert "missing session file" in capsys.readouterr().err


class TestEval:
    def test_checkpoint_eval_writes_report(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        _train(data, run, model="nextitnet")
        code = main(["eval", "--data", str(data), "--model", "nextitnet",
                     "--split", "test", "--out", str(run)] + SMALL)
        assert code == 0
        assert "mrr5=" in capsys.readouterr().out
        report = (run / "eval_nextitnet_test.txt").read_text()
        assert report.startswith("model=nextitnet")
        csv = (run / "eval_nextitnet_test.csv").read_text().splitlines()
        assert csv[0] == EvalReport.csv_header()

    def test_mostpop_needs_no_checkpoint(self, tmp_path):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        code = main(["eval", "--data", str(data), "--model", "mostpop",
                     "--split", "valid", "--out", str(run)] + SMALL)
        assert code == 0
        assert (run / "eval_mostpop_valid.txt").exists()

    def test_absent_checkpoint_fails(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        code = main(["eval", "--data", str(data), "--model", "grec",
                     "--out", str(run)] + SMALL)
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_grid_mismatch_detected(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        _train(data, run, model="nextitnet")
        other = tmp_path / "other"
        assert main(["synth", "--out", str(other), "--seed", "0"] + SMALL
                    + ["--set", "session_len=8"]) == 0
        code = main(["eval", "--data", str(other), "--model", "nextitnet",
                     "--checkpoint", str(run / "nextitnet.ckpt"),
                     "--out", str(run)] + SMALL)
        assert code == 1
        assert "does not match data" in capsys.readouterr().err


class TestInfer:
    def test_ranked_lines_and_file_output(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        _train(data, run, model="grec")
        capsys.readouterr()
        code = main(["infer", "--checkpoint", str(run / "grec.ckpt"),
                     "--model", "grec", "--prefix", "3 7 2",
                     "--out", str(run), "--set", "topn=5"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 5
        items = []
        for line in lines:
            item, score = line.split("\t")
            items.append(int(item))
            float(score)
        assert len(set(items)) == 5
        assert all(1 <= i <= 24 for i in items)
        assert (run / "infer_topn.txt").read_text().strip() == \
            "\n".join(lines)

    def test_mostpop_infer_from_data(self, tmp_path, capsys):
        data = tmp_path / "d"
        _synth(data)
        capsys.readouterr()
        code = main(["infer", "--model", "mostpop", "--data", str(data),
                     "--prefix", "1", "--set", "topn=3"])
        assert code == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 3

    def test_bad_prefix_fails(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        _train(data, run, model="nextitnet")
        code = main(["infer", "--checkpoint", str(run / "nextitnet.ckpt"),
                     "--prefix", "3 seven"])
        assert code == 1
        assert "space-separated" in capsys.readouterr().err

    def test_checkpoint_or_mostpop_required(self, capsys):
        code = main(["infer", "--prefix", "1 2"])
        assert code == 1
        assert "checkpoint" in capsys.readouterr().err


class TestAblate:
    def test_gamma_sweep_with_variant_rows(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        code = main(["ablate", "--data", str(data), "--out", str(run)] + SMALL
                    + ["--set", "gammas=0.5,1.0",
                       "--set", "variants=nextitnet,mostpop"])
        assert code == 0
        lines = (run / "ablation.csv").read_text().splitlines()
        assert lines[0] == "config," + EvalReport.csv_header()
        labels = [line.split(",")[0] for line in lines[1:]]
        assert labels == ["grec@g0.5", "grec@g1", "nextitnet", "mostpop"]
        assert (run / "ablation_mrr5.png").read_bytes()[:8] == PNG_MAGIC
        assert "test_mrr5=" in capsys.readouterr().out

    def test_projector_grid_four_ways(self, tmp_path):
        """The 2x2 encoder/projector grid trains four labeled configs."""
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        code = main(["ablate", "--data", str(data), "--out", str(run)] + SMALL
                    + ["--set", "gammas=",
                       "--set", "variants=grec,grecn,nextitnet,nextitnetp"])
        assert code == 0
        lines = (run / "ablation.csv").read_text().splitlines()
        assert [line.split(",")[0] for line in lines[1:]] == \
            ["grec", "grecn", "nextitnet", "nextitnetp"]

    def test_multi_seed_rows(self, tmp_path):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        code = main(["ablate", "--data", str(data), "--out", str(run)] + SMALL
                    + ["--set", "gammas=0.5", "--set", "variants=",
                       "--set", "ablate_seeds=0,1"])
        assert code == 0
        lines = (run / "ablation.csv").read_text().splitlines()
        assert len(lines) == 3
        seeds = [line.split(",")[2] for line in lines[1:]]
        assert seeds == ["0", "1"]

    def test_empty_grid_fails(self, tmp_path, capsys):
        data, run = tmp_path / "d", tmp_path / "run"
        _synth(data)
        code = main(["ablate", "--data", str(data), "--out", str(run)] + SMALL
                    + ["--set", "gammas=", "--set", "variants="])
        assert code == 1
        assert "ablation grid is empty" in capsys.readouterr().err
