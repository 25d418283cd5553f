import pytest

from mstnet.cli import main
from mstnet.report import read_metrics

SMALL = ["--c1", "8", "--c2", "16", "--heads", "2", "--num-scales", "2", "--encoder-layers", "1", "--epochs", "2"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, out = root / "data", root / "run"
    assert main(["synth", "--out", str(data), "--train", "6", "--dev", "3", "--test", "3"]) == 0
    assert main(["train", "--data", str(data), "--out", str(out), *SMALL]) == 0
    return data, out


def test_synth_writes_splits(run_dir):
    data, _ = run_dir
    assert {p.name for p in data.iterdir()} == {"train.mstc", "dev.mstc", "test.mstc"}


def test_train_outputs(run_dir, capsys):
    _, out = run_dir
    for name in ("last.ckpt", "best.ckpt", "metrics.tsv", "curves.png"):
        assert (out / name).stat().st_size > 0
    rows = read_metrics(out / "metrics.tsv")
    assert [r[0] for r in rows] == [1, 2]
    header = (out / "metrics.tsv").read_text().splitlines()[0]
    assert header == "epoch\ttrain_loss\tdev_wer\tlr"


def test_resume_extends_log(run_dir, tmp_path):
    data, out = run_dir
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--resume", str(out / "last.ckpt")]) == 0
    assert len(read_metrics(tmp_path / "metrics.tsv")) == 2


def test_eval(run_dir, tmp_path, capsys):
    data, out = run_dir
    report = tmp_path / "eval.tsv"
    assert main(["eval", "--checkpoint", str(out / "best.ckpt"), "--data", str(data), "--beam-width", "3", "--out", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert lines[0].startswith("sample\treference\thypothesis") and len(lines) == 4
    printed = capsys.readouterr().out.splitlines()
    assert printed[-2] == "ins\tdel\tsub\tref_words\twer"
    assert len(printed[-1].split("\t")) == 5


def test_decode_with_figure(run_dir, tmp_path, capsys):
    data, out = run_dir
    fig = tmp_path / "post.png"
    code = main(["decode", "--checkpoint", str(out / "last.ckpt"), "--data", str(data / "test.mstc"), "--index", "1", "--figure", str(fig)])
    assert code == 0 and fig.stat().st_size > 0
    hyp = capsys.readouterr().out.strip()
    assert all(tok.isdigit() for tok in hyp.split())


def test_ablate(run_dir, tmp_path):
    data, _ = run_dir
    code = main(["ablate", "--axis", "encoder", "--data", str(data), "--out", str(tmp_path), *SMALL[:-2], "--epochs", "1"])
    assert code == 0
    lines = (tmp_path / "ablation_encoder.tsv").read_text().splitlines()
    assert lines[0] == "value\tdev_wer\ttest_wer\terror"
    assert [l.split("\t")[0] for l in lines[1:]] == ["bilstm", "transformer"]
    assert (tmp_path / "ablation_encoder.png").stat().st_size > 0


def test_gradcheck_pass_and_fail(capsys):
    assert main(["gradcheck", "--max-entries", "3"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["gradcheck", "--max-entries", "2", "--tolerance", "0"]) == 4


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("heads = 3\n")
    assert main(["gradcheck", "--config", str(cfg), "--max-entries", "1"]) == 2
    assert main(["gradcheck", "--config", str(cfg), "--heads", "2", "--max-entries", "1"]) == 0


def test_exit_codes(tmp_path, run_dir):
    data, out = run_dir
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--encoder", "bilstm"]) == 2
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 3
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--data", str(data)]) == 3
    assert main(["decode", "--checkpoint", str(out / "last.ckpt"), "--data", str(data), "--index", "99"]) == 3
