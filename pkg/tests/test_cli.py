import os.path as op
import numpy as np
import pytest
from couettelab import cli
from couettelab import io

SIM_ARGS = ['--n-z', '8', '--n-y', '16', '--L-y', str(np.pi), '--nu', '1e-2',
            '--t-end', '0.5', '--dt', '0.05', '--output-every', '0.25']

def test_registry():
    assert set(cli.COMMAND_REGISTRY) == {'linear', 'simulate', 'sweep', 'verify-multipliers', 'toy'}

def test_bad_flags_exit_one(tmp_path):
    assert cli.main(['linear', '--k', 'x']) == 1
    assert cli.main(['no-such-command']) == 1
    assert cli.main(['linear', '--k', '0', '--out', str(tmp_path)]) == 1
    assert not op.exists(tmp_path / cli.MANIFEST)

def test_toy(tmp_path):
    assert cli.main(['toy', '--alpha', '0.5', '--beta', '0.75', '--out', str(tmp_path)]) == 0
    df = io.read_table(str(tmp_path / "toy.csv"))
    assert list(df.columns) == ['t', 'X2_ratio', 'theta02_ratio']
    assert df['X2_ratio'].max() < 10
    manifests = io.read_manifests(str(tmp_path / cli.MANIFEST))
    assert len(manifests) == 1 and manifests[0].command == 'toy'

def test_linear(tmp_path):
    assert cli.main(['linear', '--t-end', '30', '--dt', '0.5', '--out', str(tmp_path)]) == 0
    traj = io.read_table(str(tmp_path / "linear_trajectory.csv"))
    assert traj['t'].iloc[-1] == pytest.approx(30.0)
    assert {'env_f', 'env_theta'} <= set(traj.columns)
    fits = io.read_table(str(tmp_path / "linear_fits.csv"))
    assert list(fits['quantity']) == ['f', 'theta']

def test_verify_multipliers(tmp_path):
    args = ['verify-multipliers', '--samples', '200', '--fd-samples', '5', '--out', str(tmp_path)]
    assert cli.main(args) == 0
    report = io.read_table(str(tmp_path / "multiplier_report.csv"))
    assert report['passed'].all()

def test_sweep_toy(tmp_path):
    args = ['sweep', '--range', '0.4', '0.6', '0.1', '--epsilon', '1', '--out', str(tmp_path)]
    assert cli.main(args) == 0
    table = io.read_table(str(tmp_path / "sweep.csv"))
    assert list(table['alpha']) == [0.4, 0.5, 0.6]
    assert list(table['verdict']) == ['growth', 'bounded', 'bounded']

def test_simulate_and_resume(tmp_path):
    first = tmp_path / "first"
    assert cli.main(['simulate', *SIM_ARGS, '--out', str(first)]) == 0
    ts = io.read_timeseries(str(first / "timeseries.csv"))
    assert len(ts) == 3
    assert op.exists(first / "audit.csv")
    snap = first / "snapshot_t00000.500000.bin"
    assert op.exists(snap)

    second = tmp_path / "second"
    args = ['simulate', *SIM_ARGS, '--t-end', '1.0', '--resume', str(snap), '--out', str(second)]
    assert cli.main(args) == 0
    ts = io.read_timeseries(str(second / "timeseries.csv"))
    assert ts['t'].iloc[0] == pytest.approx(0.5) and ts['t'].iloc[-1] == pytest.approx(1.0)

def test_simulate_rerun_into_same_outputs_fails(tmp_path):
    assert cli.main(['simulate', *SIM_ARGS, '--out', str(tmp_path)]) == 0
    assert cli.main(['simulate', *SIM_ARGS, '--out', str(tmp_path)]) == 1

def test_simulate_require_stable(tmp_path):
    args = ['simulate', *SIM_ARGS, '--gamma2', '0.2', '--require-stable', '--out', str(tmp_path)]
    assert cli.main(args) == 1

def test_simulate_numerical_abort_exits_two(tmp_path, monkeypatch):
    from couettelab import sim
    real_step = sim.imex_step

    def poisoned_step(state, config, dt=None):
        new = real_step(state, config, dt)
        c = new.f_neq.coeffs.copy()
        c[1, 2] = np.nan
        return new.replace(f_neq=new.f_neq.replace(coeffs=c))

    monkeypatch.setattr(sim, 'imex_step', poisoned_step)
    assert cli.main(['simulate', *SIM_ARGS, '--out', str(tmp_path)]) == 2
    manifests = io.read_manifests(str(tmp_path / cli.MANIFEST))
    assert len(manifests) == 1
    assert manifests[0].config['aborted_at'] == pytest.approx(0.05)
    assert manifests[0].outputs == []

def test_log_level_flag(tmp_path):
    import logging
    from couettelab import utils as u
    try:
        args = ['--log-level', 'warning', 'toy', '--alpha', '0.5', '--beta', '0.75', '--out', str(tmp_path)]
        assert cli.main(args) == 0
        assert cli.logger.level == logging.WARNING
        assert cli.main(['--log-level', 'loud', 'toy']) == 1
    finally:
        u.set_verbosity(2)
