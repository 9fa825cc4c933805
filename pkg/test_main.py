"""Command-line front end and the QuadLab orchestrator."""

import json

import pytest

import main as main_module
from errors import DomainError
from main import QuadLab, build_parser, main, overrides_from_args
from models import Command, RunConfig
from storage import ArtifactWriter, MemorySweepStorage


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in ("QUADLAB_EPSILON", "QUADLAB_MEMORY_BUDGET_MB", "QUADLAB_THREADS"):
        monkeypatch.delenv(key, raising=False)


def make_lab(tmp_path, **fields):
    lines = []
    config = RunConfig(out_dir=str(tmp_path), threads=1, **fields)
    storages = {}
    lab = QuadLab(
        config,
        writer=ArtifactWriter(tmp_path),
        storage_factory=lambda bound: storages.setdefault(bound, MemorySweepStorage()),
        echo=lines.append,
    )
    return lab, lines


def test_overrides_from_flags():
    args = build_parser().parse_args(["compare", "--N", "1000,10000", "--eps", "0.1", "--no-include-d1"])
    overrides = overrides_from_args(args)
    assert overrides["command"] is Command.COMPARE
    assert overrides["bounds"] == [1000, 10000]
    assert overrides["bound"] == 10000
    assert overrides["epsilon"] == 0.1
    assert overrides["include_d1"] is False
    assert "seed" not in overrides


def test_enumerate_writes_family(tmp_path, capsys):
    assert main(["enumerate", "--N", "10", "--out", str(tmp_path), "--threads", "1"]) == 0
    lines = (tmp_path / "family_N10.txt").read_text().splitlines()
    assert lines[0] == "N=10 count=7"
    assert "count=7" in capsys.readouterr().out


def test_sweep_writes_cache_and_csv(tmp_path):
    argv = ["sweep", "--N", "100", "--lambda", "20.5", "--out", str(tmp_path), "--threads", "1"]
    assert main(argv) == 0
    csv_lines = (tmp_path / "sweep_N100.csv").read_text().splitlines()
    assert csv_lines[0] == "D,value,consistencyGap,flagged"
    cache = (tmp_path / "sweep_N100.cache").read_text().splitlines()
    assert cache[0] == "N=100 eps=0.25 lambda=20.5 version=1 tol=auto audit=0.01 factor=4.0"
    assert len(cache) == len(csv_lines)
    # a rerun reads the cache and reproduces the bytes
    first = (tmp_path / "sweep_N100.csv").read_bytes()
    assert main(argv) == 0
    assert (tmp_path / "sweep_N100.csv").read_bytes() == first


def test_invalid_config_exits_one(tmp_path, capsys):
    assert main(["sweep", "--eps", "0.7", "--out", str(tmp_path)]) == 1
    assert "ConfigError" in capsys.readouterr().err
    assert main(["sweep", "--N", "ten", "--out", str(tmp_path)]) == 1


def test_bad_flags_exit_one(tmp_path, capsys):
    assert main(["plot", "--out", str(tmp_path)]) == 1
    assert "ConfigError" in capsys.readouterr().err
    assert main(["sweep", "--bogus", "--out", str(tmp_path)]) == 1


def test_enumerate_accepts_smallest_bound(tmp_path):
    assert main(["enumerate", "--N", "1", "--out", str(tmp_path), "--threads", "1"]) == 0
    assert (tmp_path / "family_N1.txt").read_text().splitlines() == ["N=1 count=1", "1"]
    assert main(["sweep", "--N", "2", "--out", str(tmp_path), "--threads", "1"]) == 1


def test_resource_limit_exits_two(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QUADLAB_MEMORY_BUDGET_MB", "0")
    assert main(["enumerate", "--N", "1000", "--out", str(tmp_path), "--threads", "1"]) == 2
    assert "ResourceLimitError" in capsys.readouterr().err


def test_io_failure_exits_three(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["enumerate", "--N", "10", "--out", str(blocker), "--threads", "1"]) == 3


def test_sample_command(tmp_path):
    lab, lines = make_lab(tmp_path, command=Command.SAMPLE, prime_cutoff=100, samples=50)
    assert lab.run() == 0
    assert (tmp_path / "samples.bin").stat().st_size == 32 + 50 * 8
    assert len((tmp_path / "samples.csv").read_text().splitlines()) == 51
    assert lines[0].startswith("samples=50 ")


def test_charfn_command(tmp_path):
    lab, lines = make_lab(tmp_path, command=Command.CHARFN, prime_cutoff=100, taus=[0.0, 1.0])
    lab.run()
    rows = (tmp_path / "charfn.csv").read_text().splitlines()
    assert rows[0] == "tau,re,im,tailEstimate"
    assert rows[1] == "0.0,1.0,0.0,0.0"
    assert len(lines) == 2


def test_compare_command(tmp_path):
    lab, lines = make_lab(
        tmp_path, command=Command.COMPARE, bounds=[50, 200], lambda_value=10.5,
        consistency_tol=10.0, prime_cutoff=100, samples=500,
    )
    lab.run()
    assert len((tmp_path / "compare.csv").read_text().splitlines()) == 3
    summary = json.loads((tmp_path / "compare.json").read_text())
    assert summary["rows"] == 2
    assert [line.split()[0] for line in lines] == ["N=50", "N=200"]


def test_moments_command(tmp_path):
    lab, lines = make_lab(
        tmp_path, command=Command.MOMENTS, bound=200, lambda_value=10.5, k_values=[1, 2],
        consistency_tol=10.0, prime_cutoff=100, samples=500,
    )
    lab.run()
    assert len((tmp_path / "moments.csv").read_text().splitlines()) == 3
    assert len((tmp_path / "moment_growth.csv").read_text().splitlines()) == 3
    assert lines[0].startswith("k=1 ")


def test_moments_respect_k_max(tmp_path):
    lab, _ = make_lab(tmp_path, command=Command.MOMENTS, bound=50, k_values=[7], k_max=6)
    with pytest.raises(DomainError):
        lab.run()


def test_family_reports(tmp_path):
    common = dict(bounds=[50, 100], lambda_value=10.5, consistency_tol=10.0, prime_cutoff=100, samples=200)
    for command, artifact in (
        (Command.TAILS, "tails.csv"),
        (Command.MINIMA, "minima.csv"),
        (Command.SMALLVALUES, "smallvalues.csv"),
    ):
        lab, lines = make_lab(tmp_path, command=command, **common)
        lab.run()
        assert len((tmp_path / artifact).read_text().splitlines()) == 3
        assert len(lines) == 2


def test_bridge_command(tmp_path):
    lab, lines = make_lab(tmp_path, command=Command.BRIDGE, bounds=[100], n_values=[2, 3, 4])
    lab.run()
    assert len((tmp_path / "bridge.csv").read_text().splitlines()) == 4
    assert len(lines) == 1


def test_sweeps_are_shared_between_reports(tmp_path):
    lab, _ = make_lab(tmp_path, command=Command.TAILS, bounds=[50], lambda_value=10.5)
    first = lab.sweep(50)
    assert lab.sweep(50) is first


def test_family_file_is_reused(tmp_path, monkeypatch):
    (tmp_path / "family_N10.txt").write_text("N=10 count=3\n1\n-3\n-4\n")

    def refuse(*args, **kwargs):
        raise AssertionError("family was re-enumerated")

    monkeypatch.setattr(main_module, "enumerate_family", refuse)
    lab, _ = make_lab(tmp_path, command=Command.SWEEP, bound=10, lambda_value=3.5)
    assert lab.family(10).members.tolist() == [1, -3, -4]


def test_mismatched_family_file_is_ignored(tmp_path):
    (tmp_path / "family_N10.txt").write_text("N=10 count=2\n-3\n-4\n")
    lab, _ = make_lab(tmp_path, command=Command.SWEEP, bound=10, lambda_value=3.5)
    assert lab.family(10).members.tolist() == [1, -3, -4, 5, -7, 8, -8]
