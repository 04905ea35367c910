import numpy as np
import pytest

from wsnalloc import experiments
from wsnalloc.cli import main
from wsnalloc.experiments import (ConfigError, SweepSpec, bundled_config_path,
                                  load_config, rows_to_csv, run_sweep)
from wsnalloc.model import derive_stats

from test_model import GOLDEN_D0_K3

MINIMAL = """
[model]
prior_cov = 1 0.70710678118654752 ; 0.70710678118654752 2
gains = 1 0.6 0.4 ; 1 0.6 0.4
obs_noise_var = 1 1 1
channel_gain = 1 1 1
channel_noise_var = 1 1 1
p_tot_db = {ptot_db}
b_tot = {btot}
"""

SWEEP_EXTRA = """
[sweep]
axis = p_tot_db
values = {values}
algorithms = {algorithms}
trials = {trials}
seed = {seed}
"""


def write_cfg(tmp_path, text, name="test.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_bundled_paper_config_reproduces_reference_setup():
    loaded = load_config(bundled_config_path("paper_k3"))
    model = loaded.model
    s = np.sqrt(2.0) / 2.0
    assert model.q == 2 and model.K == 3
    assert model.prior_cov[0, 1] == s  # bit-exact parse of sqrt(2)/2
    assert np.array_equal(model.prior_cov, np.array([[1.0, s], [s, 2.0]]))
    assert np.array_equal(model.gains,
                          np.array([[1.0, 0.6, 0.4], [1.0, 0.6, 0.4]]))
    assert np.all(model.obs_noise_var == 1.0)
    assert np.all(model.channel_gain == 1.0)
    assert np.all(model.channel_noise_var == 1.0)
    assert model.p_tot == pytest.approx(1000.0)
    assert model.b_tot == 30
    assert derive_stats(model).d0 == pytest.approx(GOLDEN_D0_K3, rel=1e-12)
    assert loaded.sweep is not None
    assert loaded.sweep.axis == "p_tot_db"


def test_db_conversion_identity(tmp_path):
    path = write_cfg(tmp_path, MINIMAL.format(ptot_db=0, btot=4))
    assert load_config(path).model.p_tot == pytest.approx(1.0)


def test_validation_messages_carry_field_paths(tmp_path):
    bad_noise = MINIMAL.format(ptot_db=10, btot=4).replace(
        "obs_noise_var = 1 1 1", "obs_noise_var = 1 -1 1")
    with pytest.raises(ConfigError, match=r"model\.obs_noise_var\[1\]"):
        load_config(write_cfg(tmp_path, bad_noise))

    bad_dims = MINIMAL.format(ptot_db=10, btot=4).replace(
        "gains = 1 0.6 0.4 ; 1 0.6 0.4", "gains = 1 0.6 ; 1 0.6")
    with pytest.raises(ConfigError, match=r"model\.obs_noise_var"):
        load_config(write_cfg(tmp_path, bad_dims))

    not_spd = MINIMAL.format(ptot_db=10, btot=4).replace(
        "prior_cov = 1 0.70710678118654752 ; 0.70710678118654752 2",
        "prior_cov = 1 3 ; 3 1")
    with pytest.raises(ConfigError, match="model"):
        load_config(write_cfg(tmp_path, not_spd))

    missing = "\n".join(line for line in
                        MINIMAL.format(ptot_db=10, btot=4).splitlines()
                        if not line.startswith("b_tot"))
    with pytest.raises(ConfigError, match=r"model\.b_tot"):
        load_config(write_cfg(tmp_path, missing))

    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.cfg")


def test_sweep_spec_validation():
    with pytest.raises(ConfigError, match="strictly increasing"):
        SweepSpec(axis="p_tot_db", values=(1.0, 1.0), algorithms=("uniform",),
                  trials=10, seed=1)
    with pytest.raises(ConfigError, match="unknown algorithm"):
        SweepSpec(axis="p_tot_db", values=(1.0,), algorithms=("magic",),
                  trials=10, seed=1)
    with pytest.raises(ConfigError, match="axis"):
        SweepSpec(axis="power", values=(1.0,), algorithms=("uniform",),
                  trials=10, seed=1)


def sweep_config(tmp_path, trials=2000, seed=9):
    text = MINIMAL.format(ptot_db=30, btot=12) + SWEEP_EXTRA.format(
        values="10 20 30", algorithms="a_decoupled uniform",
        trials=trials, seed=seed)
    return load_config(write_cfg(tmp_path, text))


def test_sweep_deterministic_across_runs_and_workers(tmp_path):
    loaded = sweep_config(tmp_path)
    rows1 = run_sweep(loaded.model, loaded.allocator, loaded.sweep, workers=1)
    rows2 = run_sweep(loaded.model, loaded.allocator, loaded.sweep, workers=3)
    csv1 = rows_to_csv(rows1, loaded.model.K)
    csv2 = rows_to_csv(rows2, loaded.model.K)
    assert csv1 == csv2
    rows3 = run_sweep(loaded.model, loaded.allocator, loaded.sweep, workers=1)
    assert rows_to_csv(rows3, loaded.model.K) == csv1


def test_sweep_rows_ordered_and_complete(tmp_path):
    loaded = sweep_config(tmp_path)
    rows = run_sweep(loaded.model, loaded.allocator, loaded.sweep)
    assert [(r["axis"], r["algorithm"]) for r in rows] == [
        (10.0, "a_decoupled"), (10.0, "uniform"),
        (20.0, "a_decoupled"), (20.0, "uniform"),
        (30.0, "a_decoupled"), (30.0, "uniform")]
    for row in rows:
        assert row["status"] == "ok"
        assert row["mse"] >= 0.0
        assert row["two_d_a"] == pytest.approx(2 * row["d_a"])
        if row["algorithm"] == "a_decoupled":
            assert row["b_opt"] is not None
        else:
            assert row["b_opt"] is None


def test_sweep_marks_failed_rows(tmp_path, monkeypatch):
    loaded = sweep_config(tmp_path)

    real = experiments.run_allocator

    def flaky(model, cfg, stats=None):
        if cfg.algorithm == "uniform":
            raise RuntimeError("boom")
        return real(model, cfg)

    monkeypatch.setattr(experiments, "run_allocator", flaky)
    rows = run_sweep(loaded.model, loaded.allocator, loaded.sweep)
    statuses = {(r["axis"], r["algorithm"]): r["status"] for r in rows}
    assert statuses[(10.0, "uniform")].startswith("failed")
    assert statuses[(10.0, "a_decoupled")] == "ok"
    csv_text = rows_to_csv(rows, loaded.model.K)
    assert "failed: RuntimeError" in csv_text


def test_csv_nine_significant_digits(tmp_path):
    loaded = sweep_config(tmp_path)
    rows = run_sweep(loaded.model, loaded.allocator, loaded.sweep)
    csv_text = rows_to_csv(rows, loaded.model.K)
    header, line = csv_text.splitlines()[:2]
    d0_field = line.split(",")[header.split(",").index("d0")]
    assert d0_field == "0.980595034"


def test_mse_non_increasing_in_power(tmp_path):
    text = MINIMAL.format(ptot_db=30, btot=12) + SWEEP_EXTRA.format(
        values="6 12 18 24 30", algorithms="a_coupled", trials=20000, seed=3)
    loaded = load_config(write_cfg(tmp_path, text))
    rows = run_sweep(loaded.model, loaded.allocator, loaded.sweep)
    for prev, cur in zip(rows, rows[1:]):
        slack = 3.0 * (prev["mse_half_width"] + cur["mse_half_width"])
        assert cur["mse"] <= prev["mse"] + slack


def test_cli_allocate_and_out(tmp_path, capsys):
    out = tmp_path / "alloc.csv"
    rc = main(["allocate", "--config", "paper_k3", "--ptot-db", "16",
               "--btot", "3", "--out", str(out)])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "sensor 1: rate 3 bits" in captured
    assert out.exists()
    header = out.read_text().splitlines()[0]
    assert header.startswith("algorithm,L_1")


def test_cli_simulate_explicit_allocation(capsys):
    rc = main(["simulate", "--config", "paper_k3", "--rates", "3,2,1",
               "--powers", "500,300,200", "--trials", "2000", "--seed", "4"])
    assert rc == 0
    assert "simulated MSE" in capsys.readouterr().out


def test_cli_sweep_writes_csv_and_figures(tmp_path):
    cfg = write_cfg(tmp_path, MINIMAL.format(ptot_db=30, btot=8)
                    + SWEEP_EXTRA.format(values="16 30",
                                         algorithms="uniform a_decoupled",
                                         trials=500, seed=2))
    out = tmp_path / "result" / "sweep.csv"
    rc = main(["sweep", "--config", str(cfg), "--out", str(out), "--plot"])
    assert rc == 0
    assert out.exists()
    pngs = sorted(p.name for p in out.parent.glob("*.png"))
    assert "sweep_bounds.png" in pngs
    assert "sweep_mse.png" in pngs
    assert "sweep_rates.png" in pngs
    assert "sweep_powers.png" in pngs


def test_cli_error_paths(tmp_path, capsys):
    rc = main(["allocate", "--config", str(tmp_path / "missing.cfg")])
    assert rc == 1
    bad = write_cfg(tmp_path, MINIMAL.format(ptot_db=10, btot=4).replace(
        "obs_noise_var = 1 1 1", "obs_noise_var = 1 -1 1"))
    rc = main(["allocate", "--config", str(bad)])
    assert rc == 1
    rc = main(["simulate", "--config", "paper_k3", "--rates", "1,1,1"])
    assert rc == 1  # powers missing


def test_sweep_over_bit_budget_axis(tmp_path):
    text = MINIMAL.format(ptot_db=30, btot=30) + """
[sweep]
axis = b_tot
values = 3 6 12 30
algorithms = uniform
trials = 2000
seed = 21
"""
    loaded = load_config(write_cfg(tmp_path, text))
    rows = run_sweep(loaded.model, loaded.allocator, loaded.sweep)
    assert [r["axis"] for r in rows] == [3.0, 6.0, 12.0, 30.0]
    assert all(r["status"] == "ok" for r in rows)
    # More bits never hurt the even split at this power.
    mses = [r["mse"] for r in rows]
    slack = [3 * r["mse_half_width"] for r in rows]
    for i in range(len(mses) - 1):
        assert mses[i + 1] <= mses[i] + slack[i] + slack[i + 1]


def test_sweep_rejects_fractional_bit_values(tmp_path):
    text = MINIMAL.format(ptot_db=30, btot=30) + """
[sweep]
axis = b_tot
values = 3 6.5
algorithms = uniform
"""
    with pytest.raises(ConfigError, match="positive integers"):
        load_config(write_cfg(tmp_path, text))
