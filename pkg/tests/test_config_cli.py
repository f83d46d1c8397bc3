import json

import pytest
from hypothesis import given, strategies as st

from uniexp import cli
from uniexp.config import ParseError, RangeError, UnknownKey, parse_config

SYM = "preset:symmetric(alpha=0.41421356,beta=0.73205081,a=0.5,b=0.5)"
TRANSLATIONS = "preset:translations(alpha=0.41421356,beta=0.73205081)"


# -- parsing -------------------------------------------------------------------

def test_verify_example():
    cfg = parse_config(f"command=verify\nmeasure={SYM}\nC=2")
    assert cfg.command == "verify" and cfg["C"] == 2.0
    assert (cfg["nx"], cfg["ny"], cfg["ntheta"], cfg["N_max"]) == (32, 32, 64, 8)
    assert cfg.formats == ("json", "csv", "svg") and cfg.expect is None


def test_empty_file_needs_command():
    with pytest.raises(ParseError) as info:
        parse_config("")
    assert info.value.line == 1


def test_negative_threshold_is_legal():
    assert parse_config(f"command=scan-n\nmeasure={SYM}\nC=-1")["C"] == -1.0


def test_comments_and_blank_lines():
    cfg = parse_config(f"# header\n\ncommand = lyapunov   # trailing\nmeasure = {TRANSLATIONS}\n")
    assert cfg.command == "lyapunov" and cfg["n_steps"] == 100_000


def test_unknown_key_rejected():
    with pytest.raises(UnknownKey):
        parse_config(f"command=verify\nmeasure={SYM}\nsamples_per_cell=3")
    with pytest.raises(UnknownKey):  # valid for another command only
        parse_config(f"command=verify\nmeasure={SYM}\nn_steps=3")


@pytest.mark.parametrize("line", ["nx=0", "workers=0", "mode=fast", "C=nan", "master_seed=-1",
                                  "formats=json,pdf", "expect=maybe", "samples=1"])
def test_range_errors(line):
    with pytest.raises((RangeError, ParseError)):
        parse_config(f"command=verify\nmeasure={SYM}\n{line}")


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as info:
        parse_config(f"command=verify\nmeasure={SYM}\nnx=abc")
    assert info.value.line == 3
    with pytest.raises(ParseError) as info:
        parse_config("command=verify\nno equals sign")
    assert info.value.line == 2


def test_duplicate_key_is_an_error():
    with pytest.raises(ParseError):
        parse_config(f"command=verify\nmeasure={SYM}\nnx=4\nnx=8")


def test_overrides_apply_after_file():
    cfg = parse_config(f"command=verify\nmeasure={SYM}\nnx=4", overrides=["nx=6", "certify=true"])
    assert cfg["nx"] == 6 and cfg["certify"] is True


def test_integer_spellings():
    cfg = parse_config(f"command=verify\nmeasure={SYM}\nbudget=1e5\nmaster_seed=0xff\nsamples=2_000")
    assert (cfg["budget"], cfg.master_seed, cfg["samples"]) == (100_000, 255, 2000)


@given(st.sampled_from(["verify", "scan-n", "lyapunov", "stable", "nonrandom", "defect", "orbit",
                        "equidist", "smoothing"]),
       st.integers(0, 2**64 - 1), st.integers(1, 16))
def test_resolved_config_round_trips(command, seed, workers):
    cfg = parse_config(f"command={command}\nmeasure=weight 0.5 word CAT\nweight 0.5 word G3(0.25)\n"
                       .replace("\nweight", "|weight") + f"master_seed={seed}\nworkers={workers}")
    assert parse_config(cfg.to_text()) == cfg


def test_hash_ignores_workers_and_output():
    a = parse_config(f"command=verify\nmeasure={SYM}\nworkers=1\noutput=a")
    b = parse_config(f"command=verify\nmeasure={SYM}\nworkers=8\noutput=b/c")
    c = parse_config(f"command=verify\nmeasure={SYM}\nnx=4")
    assert a.config_hash() == b.config_hash() != c.config_hash()


# -- running -------------------------------------------------------------------

def _write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_translation_verify_expect_notfound(tmp_path, capsys):
    out = tmp_path / "t"
    cfg = _write(tmp_path, f"measure={TRANSLATIONS}\nN_max=3\nnx=4\nny=4\nntheta=8\noutput={out}\n"
                           "expect=notfound")
    assert cli.main(["verify", "--config", cfg]) == 0
    assert "NotFound" in capsys.readouterr().out
    report = json.loads((tmp_path / "t.report.json").read_text())
    assert report["expect_met"] is True and report["config"]["measure"] == TRANSLATIONS
    assert (tmp_path / "t.grid.csv").exists() and (tmp_path / "t.heatmap.svg").exists()


def test_expect_mismatch_exits_2(tmp_path):
    cfg = _write(tmp_path, f"measure={TRANSLATIONS}\nN_max=2\nnx=4\nny=4\nntheta=8\n"
                           f"output={tmp_path / 'm'}\nexpect=found")
    assert cli.main(["verify", "--config", cfg]) == 2


def test_errors_exit_1(tmp_path, capsys):
    cfg = _write(tmp_path, f"measure={TRANSLATIONS}\nbogus=1")
    assert cli.main(["verify", "--config", cfg]) == 1
    assert "config.UnknownKey" in capsys.readouterr().err
    cfg = _write(tmp_path, f"measure=weight 1 word STD(0.5)^-1\noutput={tmp_path / 'e'}", "e.cfg")
    assert cli.main(["lyapunov", "--config", cfg]) == 1
    assert cli.main(["verify", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_scan_n_trace_has_n_max_rows(tmp_path):
    cfg = _write(tmp_path, f"measure={TRANSLATIONS}\nN_max=5\nnx=4\nny=4\nntheta=8\noutput={tmp_path / 's'}")
    assert cli.main(["scan-n", "--config", cfg]) == 0
    lines = (tmp_path / "s.trace.csv").read_text().splitlines()
    assert lines[0].startswith("N,") and len(lines) == 1 + 5


def test_env_overrides_workers(tmp_path, monkeypatch):
    monkeypatch.setenv("UNIEXP_WORKERS", "3")
    seen = {}
    monkeypatch.setattr(cli, "run", lambda cfg: seen.setdefault("workers", cfg.workers) and 0)
    cfg = _write(tmp_path, f"measure={TRANSLATIONS}\nworkers=1")
    cli.main(["verify", "--config", cfg])
    assert seen["workers"] == 3


def test_positional_command_wins(tmp_path, monkeypatch):
    seen = {}
    monkeypatch.setattr(cli, "run", lambda cfg: seen.setdefault("command", cfg.command) and 0)
    cfg = _write(tmp_path, f"command=verify\nmeasure={TRANSLATIONS}")
    cli.main(["scan-n", "--config", cfg])
    assert seen["command"] == "scan-n"


def test_set_flags(tmp_path):
    cfg = _write(tmp_path, f"measure={TRANSLATIONS}\noutput={tmp_path / 'f'}\nformats=json")
    assert cli.main(["verify", "--config", cfg, "--set", "N_max=2", "--set", "nx=4", "--set", "ny=4",
                     "--set", "ntheta=8"]) == 0
    report = json.loads((tmp_path / "f.report.json").read_text())
    assert report["config"]["N_max"] == 2 and not (tmp_path / "f.grid.csv").exists()


@pytest.mark.parametrize("command, extra", [
    ("equidist", "n=2000\nseeds=6\nF=3"),
    ("lyapunov", "n_steps=4000\nreplicas=3"),
    ("verify", "N_max=2\nnx=4\nny=4\nntheta=8\nmode=monte_carlo\nsamples=300"),
])
def test_reports_identical_across_worker_counts(tmp_path, command, extra):
    measure = "preset:diffusion(f0=CAT,eps=0.1,n_quad=2)"
    docs = []
    for workers in (1, 8):
        cfg = _write(tmp_path, f"measure={measure}\nmaster_seed=77\n{extra}\nworkers={workers}\n"
                               f"output={tmp_path / str(workers)}")
        cli.main([command, "--config", cfg])
        docs.append((tmp_path / f"{workers}.report.json").read_bytes())
    assert docs[0] == docs[1]


@pytest.mark.parametrize("command, extra, files", [
    ("stable", "n=30\nn_omegas=3", ["directions.csv"]),
    ("nonrandom", "n=30\nn_omegas=3", []),
    ("defect", "points=32\nstarts=2\nmaxiter=20\ndegree=1", ["ladder.csv"]),
    ("orbit", "n=500", ["orbit.csv"]),
    ("smoothing", "samples=2000\ng=16", ["grid.csv", "heatmap.svg"]),
])
def test_every_command_runs(tmp_path, command, extra, files):
    cfg = _write(tmp_path, f"measure=preset:diffusion(f0=CAT,eps=0.1,n_quad=2)\n{extra}\n"
                           f"output={tmp_path / 'r'}")
    assert cli.main([command, "--config", cfg]) == 0
    report = json.loads((tmp_path / "r.report.json").read_text())
    assert report["command"] == command and len(report["config_hash"]) == 64
    for name in files:
        assert (tmp_path / f"r.{name}").exists()


def test_svg_canvas(tmp_path):
    cfg = _write(tmp_path, f"measure=preset:diffusion(f0=ID,eps=0.1,n_quad=2)\nsamples=1000\ng=8\n"
                           f"output={tmp_path / 'v'}")
    cli.main(["smoothing", "--config", cfg])
    svg = (tmp_path / "v.heatmap.svg").read_text()
    assert svg.startswith("<svg") and 'width="512"' in svg and 'height="512"' in svg
