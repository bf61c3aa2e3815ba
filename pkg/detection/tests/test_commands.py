import json
import math
from io import StringIO

import pandas as pd
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from detection import output
from detection.cli_utils import ExitCode

R_STAR = 2 * 0.1 * math.sqrt(37)


@pytest.fixture(autouse=True)
def no_env(settings):
    """Seed and worker count come from flags only"""
    settings.QRESET_SEED = None
    settings.QRESET_WORKERS = None
    return settings


def run(name: str, *args: str) -> tuple[str, str]:
    """Run a management command and return (stdout, stderr)"""
    out, err = StringIO(), StringIO()
    call_command(name, *args, stdout=out, stderr=err)
    return out.getvalue(), err.getvalue()


def table(text: str) -> pd.DataFrame:
    return pd.read_csv(StringIO(text), comment="#")


def returncode(name: str, *args: str) -> int:
    with pytest.raises(CommandError) as excinfo:
        run(name, *args)
    return excinfo.value.returncode


"""
pdf
"""


def test_pdf_scheme2_starts_at_rate():
    """F(0) = r for scheme 2 and the density integrates to one"""
    text, log = run("pdf", "--scheme=2", "--r=0.8", "--grid=0:10:11")
    frame = table(text)
    assert list(frame.columns) == ["t", "pdf"]
    assert frame["pdf"][0] == pytest.approx(0.8, rel=1e-12)
    summary = output.read_summary(text)
    assert summary["route"] == "closed"
    assert summary["normalization"] == pytest.approx(1.0, abs=1e-6)
    assert "BEGIN" in log


def test_pdf_scheme1_starts_at_zero():
    frame = table(run("pdf", "--scheme=1", "--grid=0:5:6")[0])
    assert frame["pdf"][0] == 0.0
    assert (frame["pdf"][1:] > 0).all()


def test_pdf_default_grid():
    """601 points over 20 maximal time scales"""
    text, _ = run("pdf")
    frame = table(text)
    assert len(frame) == 601
    assert frame["t"].iloc[0] == 0.0


def test_pdf_residue_route_matches_closed():
    closed = table(run("pdf", "--scheme=1", "--grid=0.5:20:40", "--route=closed")[0])
    residue = table(run("pdf", "--scheme=1", "--grid=0.5:20:40", "--route=residue")[0])
    assert (closed["pdf"] - residue["pdf"]).abs().max() < 1e-10


def test_pdf_renewal_uses_talbot():
    """Non-Poissonian protocols go through numerical inversion"""
    text, _ = run("pdf", "--scheme=2", "--protocol=lomax 2.5 1", "--grid=0:4:5")
    frame = table(text)
    summary = output.read_summary(text)
    assert summary["route"] == "talbot"
    assert summary["normalization"] is None
    assert frame["pdf"][0] == pytest.approx(2.5)
    assert frame["pdf"].notna().all()


def test_pdf_closed_route_needs_poisson():
    assert returncode("pdf", "--protocol=gamma 2 0.5", "--route=closed") == ExitCode.USAGE


def test_pdf_json_to_file(tmp_path):
    """--out writes the document and moves progress to stdout"""
    target = tmp_path / "pdf.json"
    log, _ = run("pdf", "--format=json", "--grid=0:1:3", f"--out={target}")
    doc = json.loads(target.read_text())
    assert doc["columns"] == ["t", "pdf"]
    assert len(doc["rows"]) == 3
    assert "WRITE" in log


"""
mean_sweep
"""


def test_mean_sweep_scheme1_minimum():
    """The refined minimum sits at r* = 2g√n with t̄ = 2/(g√n)"""
    text, _ = run("mean_sweep", "--scheme=1")
    frame = table(text)
    summary = output.read_summary(text)
    assert len(frame) == 81
    assert frame["mean_min"].sum() == 1
    assert summary["mean_min_interior"]
    assert summary["r_mean_min"] == pytest.approx(R_STAR, rel=1e-6)
    assert summary["mean_min"] == pytest.approx(2 / (0.1 * math.sqrt(37)), rel=1e-9)
    assert summary["r_star"] == pytest.approx(R_STAR, rel=1e-12)


def test_mean_sweep_scheme2_is_two_over_r():
    frame = table(run("mean_sweep", "--scheme=2", "--grid=log:0.1:10:9")[0])
    assert ((frame["mean"] - 2 / frame["r"]).abs() < 1e-9 * frame["mean"]).all()


def test_mean_sweep_rejects_non_positive_rates():
    assert returncode("mean_sweep", "--grid=-1:1:3") == ExitCode.USAGE


"""
simulate
"""


def test_simulate_identical_across_workers(settings):
    """Same seed gives byte-identical output whatever the worker count"""
    settings.QRESET_BLOCK_SIZE = 5000
    args = ("--trajectories=20000", "--seed=3", "--bins=50", "--r=0.8")
    single, _ = run("simulate", *args, "--workers=1")
    pooled, _ = run("simulate", *args, "--workers=3")
    assert single == pooled
    summary = output.read_summary(single)
    assert summary["n_trajectories"] == 20000
    assert abs(summary["z_score"]) < 4


def test_simulate_summary_file(tmp_path, settings):
    settings.QRESET_BLOCK_SIZE = 5000
    target = tmp_path / "summary.json"
    run("simulate", "--trajectories=10000", f"--summary={target}", "--count-times=1,5")
    summary = json.loads(target.read_text())
    assert summary["expected_mean"] == pytest.approx(2.0 + 1.0 / (2 * 0.37))
    assert [row["t"] for row in summary["measurement_counts"]] == [1.0, 5.0]


def test_simulate_short_cutoff_fails_check(settings):
    """Censoring biases the mean; the z-score check exits 3"""
    settings.QRESET_BLOCK_SIZE = 5000
    code = returncode("simulate", "--trajectories=20000", "--r=0.8", "--cutoff=3")
    assert code == ExitCode.ACCEPTANCE


"""
asymptotics
"""


def test_asymptotics_lomax_scheme2():
    text, _ = run("asymptotics", "--scheme=2", "--protocol=lomax 2.5 1", "--format=json")
    report = json.loads(text)
    assert report["small_t_order"] == 0
    assert report["small_t_limit"] == pytest.approx(2.5)
    assert report["tail_amplitude"] == pytest.approx(5.0)
    assert report["tail_exponent"] == pytest.approx(3.5)
    assert report["mean"] == pytest.approx(4.0 / 3.0)


def test_asymptotics_lomax_scheme1_cross_checks_v0():
    """Ṽ(0) from shifted transforms and from direct quadrature agree"""
    text, _ = run("asymptotics", "--scheme=1", "--protocol=lomax 2.5 1", "--format=json")
    report = json.loads(text)
    assert 0.0 < report["v0"] < 1.0
    assert report["v0_quadrature"] == pytest.approx(report["v0"], abs=1e-8)
    assert report["tail_amplitude"] == pytest.approx(2.5 / (1.0 - report["v0"]))


def test_asymptotics_poisson_has_no_tail():
    """Light tails are reported, not treated as failures"""
    frame = table(run("asymptotics", "--scheme=1")[0])
    values = dict(zip(frame["key"], frame["value"]))
    assert values["small_t_order"] == "2"
    assert values["tail_error"].startswith("NotHeavyTailed")
    assert float(values["t_m"]) > 0


def test_asymptotics_integer_exponent():
    code = returncode("asymptotics", "--scheme=2", "--protocol=lomax 2 1")
    assert code == ExitCode.NUMERICAL


"""
optimal_rate
"""


def test_optimal_rate_jc():
    report = json.loads(run("optimal_rate")[0])
    assert report["r_star_numeric"] == pytest.approx(R_STAR, rel=1e-6)
    assert report["r_star_relative_error"] < 1e-6
    assert report["r_variance_min"] == pytest.approx(R_STAR, rel=1e-6)
    assert abs(report["r_t_m_min"] - R_STAR) / R_STAR > 1e-3


def test_optimal_rate_scheme2_has_none():
    assert returncode("optimal_rate", "--scheme=2") == ExitCode.NUMERICAL


"""
accept
"""


def test_accept_deterministic_criteria():
    text, log = run("accept", "--only=4,6")
    frame = table(text)
    assert list(frame["criterion"]) == [4, 6]
    assert frame["passed"].all()
    assert log.count("PASS") == 2


def test_accept_talbot_check_names_its_sector():
    """The Talbot criterion reports which sector it inverts"""
    text, log = run("accept", "--only=9")
    frame = table(text)
    assert frame["title"][0].endswith("g=0.5 n=1 r=1")
    assert json.loads(frame["details"][0])["sector"] == {"g": 0.5, "n": 1, "r": 1.0}
    assert "g=0.5 n=1 r=1" in log


def test_accept_unknown_criterion():
    assert returncode("accept", "--only=13") == ExitCode.USAGE


"""
Usage errors
"""


@pytest.mark.parametrize(
    "args",
    [
        ("pdf", "--scheme=3"),
        ("pdf", "--r=-1"),
        ("pdf", "--protocol=uniform 1"),
        ("pdf", "--model=missing.json"),
        ("simulate", "--trajectories=0"),
        ("pdf", "--no-such-flag"),
    ],
)
def test_usage_errors_exit_1(args):
    assert returncode(*args) == ExitCode.USAGE
