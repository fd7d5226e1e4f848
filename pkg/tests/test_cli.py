from ecmem import harness
from ecmem.cli import main


def test_run_writes_csv_and_table(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = main(["run", "--env", "openroom", "--strategy", "dkm", "--memory-size", "10",
                 "--seeds", "1", "--steps", "5000", "--out", str(out), "--threads", "1"])
    assert code == 0
    recs = harness.read_csv(str(out))
    assert [r.step for r in recs] == list(range(500, 5001, 500))
    assert "openroom" in capsys.readouterr().err


def test_run_from_config_with_override(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[experiment]\nenv = cartpole\nstrategy = rew\nmemory_size = 50\ntotal_steps = 400\neval_interval = 100\neval_episodes = 1\nseeds = 1\n")
    assert main(["run", "--config", str(cfg), "--strategy", "sur", "--threads", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == ",".join(harness.CSV_HEADER)
    assert len(lines) == 5 and all(",sur,50," in l for l in lines[1:])


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["run", "--env", "pong", "--steps", "10"]) == 2
    assert "env" in capsys.readouterr().err
    assert main(["run", "--memory-size", "0"]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["run", "--strategy", "fifo"]) == 2
    assert main(["stream-study", "--memory-size", "1", "--out-dir", str(tmp_path)]) == 2


def test_table(tmp_path, capsys):
    path = tmp_path / "r.csv"
    recs = [harness.EvalRecord(s, "acrobot", "dkm", 150, 500 * i, float(-100 * (s + 1))) for s in range(2) for i in range(1, 11)]
    harness.write_csv(recs, str(path))
    assert main(["table", "--in", str(path), "--last", "10"]) == 0
    out = capsys.readouterr().out
    assert "acrobot" in out and "-150.0" in out and "50.0" in out
    assert main(["table", "--in", str(path), "--last", "11"]) == 2


def test_stream_study(tmp_path, capsys):
    assert main(["stream-study", "--memory-size", "20", "--seed", "1", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "snapshots.csv").exists()
    assert (tmp_path / "density_dkm.csv").exists()
    assert "dkm" in capsys.readouterr().out
