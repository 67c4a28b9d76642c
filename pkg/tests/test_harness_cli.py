import json
from fractions import Fraction

import numpy as np
import pytest

from machflow.cli import main as cli_main
from machflow.harness import (
    ConvergenceTable,
    ExperimentConfig,
    divisor_artifacts,
    emit,
    run_converge,
    run_divisor,
    run_identities,
    run_simulate,
    write_csv,
)

TINY = dict(cutoff=6, dt=2e-3, horizon=0.02, eps_list=(0.1, 0.05))


def test_config_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        """
        # comment
        schema = 1
        dim = 2
        cutoff = 12
        aspect_sq = 1, 2/3
        eps_list = 0.1, 0.05, 0.025
        delta = 0.5
        outdir = results
        """
    )
    cfg = ExperimentConfig.from_file(path)
    assert cfg.cutoff == 12
    assert cfg.aspect_sq == (Fraction(1), Fraction(2, 3))
    assert cfg.eps_list == (0.1, 0.05, 0.025)
    assert cfg.outdir == "results"


def test_config_validation_errors():
    with pytest.raises(ValueError):
        ExperimentConfig(schema=2).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(eps_list=(0.05, 0.1)).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(delta=1.5).validate()
    with pytest.raises(ValueError):
        ExperimentConfig(eps_list=(0.5, 0.1)).validate()   # above eps0
    with pytest.raises(KeyError):
        ExperimentConfig().with_overrides({"bogus": "1"})


def test_config_digest_stable():
    a = ExperimentConfig()
    b = ExperimentConfig()
    assert a.digest() == b.digest()
    assert a.digest() != ExperimentConfig(seed=1).digest()


def test_single_eps_flagged():
    cfg = ExperimentConfig(**{**TINY, "eps_list": (0.1,)})
    table = run_converge(cfg)
    assert len(table.rows) == 1
    assert table.flags["fit"] == "insufficient for fit"


def test_pure_kernel_data_gives_zero_Z():
    # dissipation couples the kernel part to the oscillating modes linearly
    # (temperature diffuses while density does not), so the filtered gap is
    # proportional to the data amplitude: it sits below 1e-8 for small data
    cfg = ExperimentConfig(**TINY, osc_amp=0.0, init_norm=1e-6)
    table = run_converge(cfg)
    for row in table.rows:
        assert row["Z"] < 1e-8
    # at desk amplitude the gap is still tiny and shrinks with eps
    big = run_converge(ExperimentConfig(**TINY, osc_amp=0.0))
    zs = [row["Z"] for row in big.rows]
    assert all(z < 1e-3 for z in zs)
    assert zs[1] < zs[0]


def test_identities_report_and_fault_injection():
    cfg = ExperimentConfig()
    rep = run_identities(cfg, cutoff=6, nsamples=6)
    assert rep["all_pass"]
    for name in (
        "eigen_residual",
        "skew_adjoint",
        "projection_algebra",
        "filter_isometry",
        "cancellation",
        "prime_energy",
    ):
        assert rep[name]["pass"], name
    bad = run_identities(cfg, cutoff=6, nsamples=6, perturb_weight=1e-3)
    assert not bad["skew_adjoint"]["pass"]
    assert not bad["all_pass"]


def test_emit_header_only_and_determinism(tmp_path):
    empty = {"columns": ["a", "b"], "rows": []}
    paths = emit({"t": empty}, tmp_path / "one")
    csv_path = [p for p in paths if p.name == "t.csv"][0]
    assert csv_path.read_bytes() == b"a,b\r\n"

    cfg = ExperimentConfig(**TINY)
    t1 = run_converge(cfg)
    t2 = run_converge(cfg)
    p1 = emit({"converge": t1}, tmp_path / "r1")
    p2 = emit({"converge": t2}, tmp_path / "r2")
    for a, b in zip(sorted(p1), sorted(p2)):
        assert a.read_bytes() == b.read_bytes()


def test_manifest_contents(tmp_path):
    cfg = ExperimentConfig(**TINY)
    table = run_converge(cfg)
    emit({"converge": table}, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    entry = manifest["tables"]["converge"]
    assert entry["config_sha256"] == cfg.digest()
    assert entry["seed"] == cfg.seed
    # the stored canonical text rebuilds an identical config
    assert ExperimentConfig.from_text(entry["config_text"]).digest() == cfg.digest()
    assert "numpy" in manifest["versions"]


def test_rerun_from_manifest_reproduces(tmp_path):
    cfg = ExperimentConfig(**TINY)
    w1 = run_converge(cfg).rows[0]["W"]
    # a fresh config built from the same canonical text reproduces W exactly
    cfg2 = ExperimentConfig.from_text(cfg.to_text())
    assert cfg2.digest() == cfg.digest()
    w2 = run_converge(cfg2).rows[0]["W"]
    assert w1 == w2


def test_run_divisor_shapes():
    cfg = ExperimentConfig(m_grid=(2, 3, 4, 6), n_aspect_samples=2)
    res = run_divisor(cfg)
    assert len(res["two_wave"]["reports"]) == 4
    assert len(res["sampled_aspects"]) == 2
    art = divisor_artifacts(res)
    assert art["columns"][0] == "aspect"
    assert len(art["rows"]) == 4 * 2 + 4 * 2


def test_run_simulate_and_snapshots(tmp_path):
    cfg = ExperimentConfig(
        cutoff=6, dt=2e-3, horizon=0.01, record_every=2,
        outdir=str(tmp_path / "sim"),
    )
    out = run_simulate(cfg)
    assert out["columns"][0] == "time"
    assert len(out["rows"]) == 6
    snaps = sorted((tmp_path / "sim").glob("snapshot_*.mfld"))
    assert len(snaps) == 3


def test_cli_identities_and_norm(tmp_path, capsys):
    rc = cli_main(
        ["identities", "--set", "seed=1", "-o", str(tmp_path / "ids")]
    )
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["all_pass"]

    # write a snapshot through simulate, then evaluate a norm on it
    rc = cli_main(
        [
            "simulate",
            "--set", "cutoff=6", "--set", "dt=2e-3", "--set", "horizon=0.004",
            "--set", "record_every=1",
            "-o", str(tmp_path / "sim"),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    snap = sorted((tmp_path / "sim").glob("snapshot_*.mfld"))[0]
    rc = cli_main(["norm", str(snap), "--family", "H", "--s", "1.0"])
    assert rc == 0
    val = float(capsys.readouterr().out.strip())
    assert val > 0


def test_cli_unknown_key_fails(tmp_path):
    with pytest.raises(KeyError):
        cli_main(["identities", "--set", "nope=3", "-o", str(tmp_path)])


def test_worker_cap(monkeypatch):
    from machflow.harness import worker_count

    monkeypatch.setenv("MACHFLOW_THREADS", "3")
    assert worker_count(8) == 3
    assert worker_count(2) == 2
    monkeypatch.delenv("MACHFLOW_THREADS")
    assert worker_count(8) == 1
