import json

import numpy as np
import pytest
import yaml

from qlmsim import cli
from qlmsim import experiment as E
from qlmsim.observables import TimeSeriesResult, occupation_profile

SEEDS = {"twirl": 11, "noise": 12, "bootstrap": 13}


def _noisy_raw(out, **extra):
    raw = {
        "model": {"L": 8, "n_steps": 2},
        "experiment": {"kind": "ep_scatter"},
        "noise": {"p2q": 0.01, "p1q": 0.001, "p_ro": 0.01},
        "shots": {"twirls": 4, "per_twirl": 50, "batch_size": 2},
        "mitigation": {"epsilon": [0.01, 0.05], "n_C": [1, 2], "bootstrap_count": 5},
        "seeds": dict(SEEDS),
        "output": {"dir": str(out)},
    }
    raw.update(extra)
    return raw


def _write(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


# --- config ----------------------------------------------------------------------

def test_minimal_config_defaults(tmp_path):
    cfg = E.config_from_dict({"model": {"L": 8, "n_steps": 3}, "seeds": SEEDS})
    assert cfg.noiseless
    assert cfg.twirls * cfg.shots_per_twirl == 50_000
    assert cfg.step_list() == [1, 2, 3]


@pytest.mark.parametrize("mutate", [
    lambda r: r.pop("seeds"),
    lambda r: r["seeds"].pop("noise"),
    lambda r: r["seeds"].update(twirl=-1),
    lambda r: r["seeds"].update(twirl="abc"),
    lambda r: r.update(bogus=1),
    lambda r: r["model"].update(L=2),
    lambda r: r["model"].update(unknown_field=3),
    lambda r: r.update(backend={"physics": "tableau"}),
    lambda r: r.update(backend={"physics": "mps"}),          # noisy + mps
    lambda r: r["shots"].update(twirls=0),
    lambda r: r["shots"].update(per_twirl=7, per_trajectory=2),
    lambda r: r["mitigation"].update(epsilon=[1.5]),
    lambda r: r["mitigation"].update(n_C=[]),
    lambda r: r.update(steps="0-2"),
    lambda r: r.update(steps="1-9"),
    lambda r: r.update(noise={"p2q": 2.0}),
    lambda r: r["experiment"].update(kind="nonsense"),
])
def test_config_errors(tmp_path, mutate):
    raw = _noisy_raw(tmp_path)
    mutate(raw)
    with pytest.raises(E.ConfigError):
        E.config_from_dict(raw)


def test_statevector_limit_enforced(tmp_path):
    with pytest.raises(E.ConfigError, match="mps"):
        E.config_from_dict({"model": {"L": 45, "n_steps": 1}, "seeds": SEEDS})
    cfg = E.config_from_dict({"model": {"L": 45, "n_steps": 1}, "seeds": SEEDS,
                              "backend": {"physics": "mps"}})
    assert cfg.physics_backend == "mps"


def test_to_dict_round_trip(tmp_path):
    cfg = E.config_from_dict(_noisy_raw(tmp_path, steps=[2]))
    again = E.config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["run", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed\n")
    assert cli.main(["build", "--config", str(bad)]) == cli.EXIT_CONFIG
    raw = _noisy_raw(tmp_path)
    del raw["seeds"]
    assert cli.main(["build", "--config", str(_write(tmp_path, raw))]) == cli.EXIT_CONFIG
    assert "seeds" in capsys.readouterr().err


def test_cli_override_validation(tmp_path):
    p = _write(tmp_path, _noisy_raw(tmp_path / "o"))
    assert cli.main(["build", "--config", str(p), "--seed", "-3"]) == cli.EXIT_CONFIG
    assert cli.main(["build", "--config", str(p), "--steps", "5-7"]) == cli.EXIT_CONFIG
    # the noisy config cannot run on the noiseless MPS backend
    assert cli.main(["build", "--config", str(p), "--backend", "mps"]) == cli.EXIT_CONFIG


def test_cli_stage_out_of_order_is_config_error(tmp_path):
    p = _write(tmp_path, _noisy_raw(tmp_path / "empty"))
    assert cli.main(["mitigate", "--config", str(p)]) == cli.EXIT_CONFIG


def test_cli_numerical_error_exit_code(tmp_path, monkeypatch):
    def boom(cfg):
        raise E.MitigationError("every candidate failed at step index 0")
    monkeypatch.setattr(E, "stage_scan", boom)
    p = _write(tmp_path, _noisy_raw(tmp_path / "o"))
    assert cli.main(["scan", "--config", str(p)]) == cli.EXIT_NUMERIC


def test_cli_build_writes_gatelists(tmp_path):
    p = _write(tmp_path, _noisy_raw(tmp_path / "o"))
    assert cli.main(["build", "--config", str(p)]) == 0
    assert (tmp_path / "o" / "circuit_wp.txt").read_text().strip()
    assert (tmp_path / "o" / "circuit_vac.txt").read_text().strip()


# --- zero-noise path ---------------------------------------------------------------

def test_zero_noise_matches_ideal(tmp_path):
    raw = {"model": {"L": 12, "n_steps": 5}, "seeds": SEEDS, "output": {"dir": str(tmp_path)}}
    cfg = E.config_from_dict(raw)
    res = E.run_experiment(cfg)
    circ = E.circuits(cfg)
    zw = E.ideal_z_series(*circ["wp"])
    zv = E.ideal_z_series(*circ["vac"])
    for k, s in enumerate(res.steps):
        want, _ = occupation_profile(zw[s], zv[s])
        assert np.max(np.abs(res.occupation[k] - want)) <= 1e-9
    assert res.steps == [1, 2, 3, 4, 5]
    assert np.all(res.occupation_std == 0)


def test_zero_rate_noise_counts_as_noiseless(tmp_path):
    raw = {"model": {"L": 8, "n_steps": 1}, "seeds": SEEDS,
           "noise": {"p2q": 0.0, "p1q": 0.0, "p_ro": 0.0}}
    assert E.config_from_dict(raw).noiseless


# --- report ------------------------------------------------------------------------

def test_empty_result_header_only(tmp_path):
    res = TimeSeriesResult(L=8, steps=[])
    E.emit_report(res, tmp_path)
    text = (tmp_path / "results.csv").read_text()
    assert text == ",".join(E.CSV_COLUMNS) + "\n"
    assert E.read_csv(tmp_path / "results.csv") == []


def test_row_count_and_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    steps = [1, 2, 5]
    L = 9
    res = TimeSeriesResult(L, steps, 0.25, rng.normal(size=(3, L - 1)),
                           rng.random((3, L - 1)), rng.normal(size=3), rng.random(3),
                           [0.01, 0.05, 0.1], [2, 3, 4])
    written = E.emit_report(res, tmp_path)
    assert {p.name for p in written} == {"results.csv", "summary.json", "occupation.svg"}
    rows = E.read_csv(tmp_path / "results.csv")
    assert len(rows) == len(steps) * (L - 1)
    occ = np.array([r["occupation"] for r in rows]).reshape(3, L - 1)
    std = np.array([r["occupation_std"] for r in rows]).reshape(3, L - 1)
    assert np.array_equal(occ, res.occupation)
    assert np.array_equal(std, res.occupation_std)
    for k, s in enumerate(steps):
        row = rows[k * (L - 1)]
        assert row["step"] == s and row["time"] == s * 0.25
        assert row["flux"] == res.flux[k] and row["flux_std"] == res.flux_std[k]
        assert row["epsilon"] == res.epsilon[k] and row["n_C"] == res.n_C[k]
    assert [r["site"] for r in rows[:L - 1]] == list(range(1, L))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["flux"] == list(res.flux)
    assert (tmp_path / "occupation.svg").read_text().lstrip().startswith("<?xml")


def test_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        E.emit_report(TimeSeriesResult(L=4, steps=[]), blocker / "sub")


# --- noisy pipeline ----------------------------------------------------------------

@pytest.fixture(scope="module")
def noisy_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("noisy")
    outs = []
    for name in ("a", "b"):
        cfg_path = _write(base, _noisy_raw(base / name), name=f"{name}.yaml")
        assert cli.main(["run", "--config", str(cfg_path)]) == 0
        outs.append(base / name)
    return outs


def test_noisy_run_outputs(noisy_runs):
    out = noisy_runs[0]
    rows = E.read_csv(out / "results.csv")
    assert len(rows) == 2 * 7
    assert all(r["epsilon"] in (0.01, 0.05) and r["n_C"] in (1, 2) for r in rows)
    assert all(np.isfinite(r["occupation"]) and r["occupation_std"] >= 0 for r in rows)
    assert sorted(p.name for p in (out / "dist").iterdir()) == sorted(
        f"step{s:03d}_{role}_{kind}.json" for s in (1, 2) for role in ("wp", "vac")
        for kind in ("phys", "nec"))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["metadata"]["total_shots"] == 200


def test_determinism_byte_identical(noisy_runs):
    a, b = noisy_runs
    for name in ("results.csv", "summary.json"):
        ta = (a / name).read_text().replace(str(a), "OUT")
        tb = (b / name).read_text().replace(str(b), "OUT")
        assert ta == tb
    assert (a / "occupation.svg").read_bytes() == (b / "occupation.svg").read_bytes()


def test_stages_resume_to_same_result(noisy_runs, tmp_path):
    out = tmp_path / "staged"
    p = _write(tmp_path, _noisy_raw(out))
    for stage in ("build", "simulate", "mitigate", "scan", "report"):
        assert cli.main([stage, "--config", str(p)]) == 0
    assert (out / "results.csv").read_text() == (noisy_runs[0] / "results.csv").read_text()


def test_seed_override_changes_samples(tmp_path):
    p = _write(tmp_path, _noisy_raw(tmp_path / "x", steps=[1]))
    assert cli.main(["simulate", "--config", str(p), "--seed", "99"]) == 0
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "y")]) == 0
    a = (tmp_path / "x" / "dist" / "step001_wp_phys.json").read_text()
    b = (tmp_path / "y" / "dist" / "step001_wp_phys.json").read_text()
    assert a != b


def test_batch_isolation(tmp_path):
    cfg = E.config_from_dict(_noisy_raw(tmp_path))
    circ, init = E.circuits(cfg)["wp"]
    kw = dict(twirls=6, shots_per_twirl=20, twirl_seed=5, noise_seed=6)
    whole, whole_n = E.noisy_samples(circ, init, cfg.noise, [1, 2], batch_size=6, **kw)
    split, split_n = E.noisy_samples(circ, init, cfg.noise, [1, 2], batch_size=2, **kw)
    # one batch re-run on its own and merged by hand
    parts = [E._run_batch((circ, init, cfg.noise, [1, 2], 5, 6, b, 2, 20, 1)) for b in (4, 0, 2)]
    for k in range(2):
        manual = parts[0][0][k].merged(parts[1][0][k]).merged(parts[2][0][k])
        assert whole[k] == split[k] == manual
        assert whole_n[k] == split_n[k]
