import random

import numpy as np
import pytest

from rbk.cli import main
from rbk.config import (ConfigError, RunRecord, parse_config, read_series, write_series)
from rbk.integrate import TimeSeries

MINIMAL = """\
kernel.family = constant
kernel.c = 1
n = 8
init.family = monodisperse
init.size = 1
init.density = 1
integrator.t_end = 1
"""


def write(tmp_path, text, name="ok.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# parsing

def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.n == 8
    assert cfg.kernel().c == 1.0
    assert cfg.initial_data().size == 1
    integ = cfg.integrator()
    assert integ.t_end == 1.0 and integ.abs_tol == 1e-10 and integ.sample_times.size == 256


def test_missing_family_parameter_names_key():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("constant", "product").replace("kernel.c = 1\n", ""))
    assert "kernel.alpha" in str(exc.value)


def test_duplicate_key_reports_both_lines():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "n = 16\n")
    assert "3" in str(exc.value) and "8" in str(exc.value)
    assert any(line == 8 for line, _ in exc.value.errors)


@pytest.mark.parametrize("extra, needle", [
    ("kernel.colour = red\n", "kernel.colour"),
    ("integrator.rel_tol = tight\n", "integrator.rel_tol"),
    ("garbage line\n", "key = value"),
])
def test_line_errors(extra, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + extra)
    assert needle in str(exc.value)


def test_missing_required_key():
    with pytest.raises(ConfigError, match="integrator.t_end"):
        parse_config(MINIMAL.replace("integrator.t_end = 1\n", ""))


def test_semantic_errors_are_config_errors():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("init.size = 1", "init.size = 99"))


def test_comments_and_blank_lines():
    cfg = parse_config("# run\n\n" + MINIMAL.replace("n = 8", "n = 8  # truncation"))
    assert cfg.n == 8


def test_digest_stable_under_reordering():
    lines = MINIMAL.splitlines()
    base = parse_config(MINIMAL).digest()
    rng = random.Random(0)
    for _ in range(5):
        rng.shuffle(lines)
        assert parse_config("\n".join(lines)).digest() == base
    assert parse_config(MINIMAL.replace("n = 8", "n = 9")).digest() != base
    assert parse_config(MINIMAL + "seed = 3\n").digest() != base


# output

def small_series():
    dens = np.array([[1.0, 0.0, 0.0, 0.0], [0.6, 0.1, 0.0, 0.0], [0.4, 0.1 / 3, 0.0, 0.0]])
    return TimeSeries.from_densities([0.0, 0.5, 1.0], dens, dissipation=np.array([0.0, 0.1, 0.2]))


def test_moments_file_shape(tmp_path):
    paths = write_series(small_series(), tmp_path / "s.csv")
    lines = paths[0].read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "t,M0,Mhalf,M1,dissipation,clamped_mass"


def test_round_trip_is_bit_exact(tmp_path):
    s = small_series()
    write_series(s, tmp_path / "s.csv", "full")
    back = read_series(tmp_path / "s.csv", tmp_path / "s_density.csv")
    for name in ("times", "M0", "Mhalf", "M1", "dissipation", "clamped_mass", "densities"):
        assert np.array_equal(getattr(back, name), getattr(s, name))


def test_full_mode_header(tmp_path):
    paths = write_series(small_series(), tmp_path / "s.csv", "full")
    header = paths[1].read_text().splitlines()[0]
    assert header == "t,f_1,f_2,f_3,f_4"


def test_write_failure_names_path(tmp_path):
    with pytest.raises(OSError):
        write_series(small_series(), tmp_path / "missing" / "s.csv")


# command line

def test_simulate_ok(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "run.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert out.exists()
    record = RunRecord.read(tmp_path / "run.run.json")
    assert record.config_digest == parse_config(MINIMAL).digest()
    assert record.exit_status == 0


def test_simulate_is_deterministic(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    for name in ("a.csv", "b.csv"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name), "--full"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_density.csv").read_bytes() == (tmp_path / "b_density.csv").read_bytes()


def test_verify_fabricated_violation(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("n = 8", "n = 2"))
    dens = np.array([[1.0, 0.0], [0.5, 0.5], [0.4, 0.1]])
    s = TimeSeries.from_densities([0.0, 0.5, 1.0], dens, dissipation=np.zeros(3))
    write_series(s, tmp_path / "bad.csv", "full")
    report = tmp_path / "report.csv"
    code = main(["verify", "--config", cfg, "--series", str(tmp_path / "bad.csv"),
                 "--report", str(report)])
    assert code == 1
    assert "mass_monotone,trajectory" in report.read_text()
    assert ",fail," in capsys.readouterr().out


def test_verify_simulates_when_no_series(tmp_path, capsys):
    assert main(["verify", "--config", write(tmp_path, MINIMAL)]) == 0


def test_unknown_subcommand(capsys):
    assert main(["explode"]) == 2
    assert "usage" in capsys.readouterr().err


def test_config_error_exit(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "bogus.key = 1\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 2
    assert "bogus.key" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--out", "x.csv"]) == 2


@pytest.mark.parametrize("cmd", ["simulate", "verify", "converge", "ssa", "bench"])
def test_help_documents_flags(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    text = capsys.readouterr().out
    for flag in {"simulate": ["--config", "--out", "--full", "--report"],
                 "verify": ["--config", "--series"],
                 "converge": ["--config", "--n"],
                 "ssa": ["--volume", "--seed", "--replicates"],
                 "bench": ["--n", "--kernel"]}[cmd]:
        assert flag in text


def test_converge_cli(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("init.family = monodisperse\ninit.size = 1",
                                          "init.family = geometric\ninit.ratio = 0.5"))
    assert main(["converge", "--config", cfg, "--n", "8,16,32"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("n,paired_n") and len(out) == 3


def test_converge_cli_vacuous(tmp_path):
    assert main(["converge", "--config", write(tmp_path, MINIMAL), "--n", "8,16"]) == 2


def test_ssa_cli(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("n = 8", "n = 4") + "integrator.samples = 0,0.5,1\n")
    out = tmp_path / "ssa.csv"
    assert main(["ssa", "--config", cfg, "--volume", "100", "--seed", "5", "--replicates", "4",
                 "--out", str(out)]) == 0
    assert out.exists() and (tmp_path / "ssa_se.csv").exists()
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "replicate,seed,events" and len(lines) == 5


def test_bench_cli(capsys):
    assert main(["bench", "--n", "64", "--kernel", "product,constant"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 5
    assert main(["bench", "--n", "64", "--kernel", "warp"]) == 2
