"""Command-line surface: ``couettelab <command> [options]``.

Every command writes its outputs into ``--out`` and appends a RunManifest
line to ``<out>/manifest.jsonl``. Exit status is 0 on success, 1 on invalid
input (bad flags, config errors, failed lemma checks) and 2 when a run
aborts on a non-finite value.
"""
import argparse
import dataclasses
import os
import os.path as op
import numpy as np
import pandas as pd

from . import (config as cfg, diagnostics as dg, io, linear as lin, multipliers as mp,
               sim, threshold as th, utils as u)

logger = u.init_logger(__name__)

MANIFEST = "manifest.jsonl"

COMMAND_REGISTRY = {}

def command_cls(name):
    """register a Command subclass under a subcommand name"""
    def decorator(cls):
        if name in COMMAND_REGISTRY:
            logger.warning(f"Command {name} already exists in the registry.")
        cls.name = name
        COMMAND_REGISTRY[name] = cls
        return cls
    return decorator

class Command:
    name = None
    help = None

    def add_arguments(self, parser: argparse.ArgumentParser):
        pass

    def run(self, args, manifest: io.RunManifest):
        """execute, filling manifest.config / seed / outputs"""
        raise NotImplementedError

def _out(args, name):
    return op.join(args.out, name)

def _overrides(args, keys):
    return {key: getattr(args, key, None) for key in keys}

# ====================
# commands
# ====================

@command_cls('linear')
class LinearCommand(Command):
    help = "integrate one (k, eta) mode of the linearized system"

    def add_arguments(self, parser):
        parser.add_argument('--config', help="flat YAML file with mode keys")
        parser.add_argument('--k', type=int)
        parser.add_argument('--eta', type=float)
        parser.add_argument('--nu', type=float)
        parser.add_argument('--gamma2', type=float)
        parser.add_argument('--t-end', dest='t_end', type=float)
        parser.add_argument('--dt', type=float)

    def run(self, args, manifest):
        config = cfg.load_config(args.config, 'mode', _overrides(args, cfg.documented_keys('mode')))
        manifest.config = config.to_dict()
        params = config.params
        traj = lin.integrate_mode(config.initial_state(), params, config.t_end, config.dt)
        df = lin.trajectory_frame(traj)
        if params.gamma2 > 0.25:
            _, env_f, env_th = lin.mode_envelopes(traj, params)
        else:
            env_f = np.abs(df['f_re'] + 1j * df['f_im']).to_numpy()
            env_th = np.abs(df['Theta_re'] + 1j * df['Theta_im']).to_numpy() / abs(config.k)
        df['env_f'], df['env_theta'] = env_f, env_th
        traj_path = _out(args, "linear_trajectory.csv")
        io.write_table(df, traj_path)

        t = df['t'].to_numpy()
        window = (10.0, min(0.5 * params.nu**(-1/3), t[-1])) if params.nu > 0 else (min(20.0, 0.5 * t[-1]), t[-1])
        fits = []
        for name, series in [('f', env_f), ('theta', env_th)]:
            try:
                fit = dg.fit_rates((t, series), window, nu=params.nu)
            except ValueError as e:
                logger.warning(f"no fit for {name}: {e}")
                continue
            logger.info(f"{name}: power {fit.power_exponent:+.4f}, rate {fit.exp_rate:.4g}, "
                        f"residual {fit.residual:.3g} over {fit.window}")
            fits.append({'quantity': name, 't1': fit.window[0], 't2': fit.window[1],
                         'power_exponent': fit.power_exponent, 'exp_rate': fit.exp_rate,
                         'residual': fit.residual})
        fit_path = _out(args, "linear_fits.csv")
        io.write_table(pd.DataFrame(fits, columns=['quantity', 't1', 't2', 'power_exponent',
                                                   'exp_rate', 'residual']), fit_path)
        manifest.outputs += [traj_path, fit_path]

SIM_FLAGS = [('nu', float), ('gamma2', float), ('epsilon', float), ('seed', int),
             ('n_z', int), ('n_y', int), ('L_y', float), ('dt', float), ('t_end', float),
             ('s', float), ('K', float), ('c', float), ('output_every', float)]

def _add_sim_flags(parser):
    for key, typ in SIM_FLAGS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    parser.add_argument('--no-dealias', dest='dealias', action='store_const', const=False)
    parser.add_argument('--linear-only', dest='nonlinear', action='store_const', const=False)
    parser.add_argument('--cap-t-end', dest='cap_t_end', action='store_const', const=True)

@command_cls('simulate')
class SimulateCommand(Command):
    help = "run the nonlinear solver and write the energy time series"

    def add_arguments(self, parser):
        parser.add_argument('--config', help="flat YAML file with sim keys")
        _add_sim_flags(parser)
        parser.add_argument('--require-stable', action='store_true', help="reject gamma2 <= 1/4")
        parser.add_argument('--resume', help="snapshot file to start from")
        parser.add_argument('--snapshot-every', type=int, default=0,
                            help="write a snapshot every n-th output")

    def run(self, args, manifest):
        config = cfg.load_config(args.config, 'sim', _overrides(args, cfg.documented_keys('sim')),
                                 require_stable=args.require_stable)
        manifest.config = config.to_dict()
        manifest.seed = config.seed
        state0 = None
        if args.resume:
            state0, meta = sim.load_snapshot(args.resume)
            if state0.grid != config.grid:
                raise ValueError(f"snapshot grid {state0.grid} does not match config grid {config.grid}")
            logger.info(f"resuming from {args.resume} at t = {state0.t:.6g}")
        result = sim.run(config, state0=state0, snapshot_every=args.snapshot_every)

        ts_path = _out(args, "timeseries.csv")
        io.write_timeseries(result.ledgers, ts_path)
        manifest.outputs.append(ts_path)
        for snap in result.snapshots + [result.final]:
            path = _out(args, f"snapshot_t{snap.t:012.6f}.bin")
            if path in manifest.outputs: continue
            sim.save_snapshot(snap, config, path)
            manifest.outputs.append(path)
        if config.gamma2 > 0.25:
            report = dg.theorem_audit(result.ledgers, config)
            audit_path = _out(args, "audit.csv")
            io.write_table(pd.DataFrame({
                'inequality': list(report.constants),
                'C': list(report.constants.values()),
                'flagged': [name in report.flagged for name in report.constants],
            }), audit_path)
            manifest.outputs.append(audit_path)

@command_cls('sweep')
class SweepCommand(Command):
    help = "toy-model exponent sweep or full-simulator amplitude sweep"

    def add_arguments(self, parser):
        parser.add_argument('--mode', choices=sorted(th.SWEEPS), default='toy')
        parser.add_argument('--config', help="base config (toy or sim keys, by mode)")
        parser.add_argument('--vary', choices=['alpha', 'beta'], default='alpha')
        parser.add_argument('--range', nargs=3, type=float, metavar=('START', 'STOP', 'STEP'),
                            default=[0.30, 0.70, 0.05])
        parser.add_argument('--alpha', type=float, default=0.5)
        parser.add_argument('--beta', type=float, default=0.75)
        parser.add_argument('--epsilon', type=float, nargs='+', default=[1.0])
        parser.add_argument('--nu', type=float, nargs='+')
        parser.add_argument('--workers', type=int)

    def run(self, args, manifest):
        if args.mode == 'toy':
            nus = args.nu or [1e-40]
            fixed = {'beta': args.beta} if args.vary == 'alpha' else {'alpha': args.alpha}
            cells = [cell for eps in args.epsilon for nu in nus
                     for cell in th.exponent_grid(args.vary, *args.range, epsilon=eps, nu=nu, **fixed)]
            base = None
            if args.config:
                data = cfg.parse(args.config)
                data.setdefault('alpha', args.alpha)
                data.setdefault('beta', args.beta)
                base = cfg.load_config(data, 'toy')
        else:
            nus = args.nu or [1e-3]
            cells = [{'epsilon': eps, 'nu': nu} for eps in args.epsilon for nu in nus]
            base = cfg.load_config(args.config, 'sim')
        manifest.config = {'mode': args.mode, 'cells': cells,
                           'base': base.to_dict() if base is not None else None}
        table = th.sweep(cells, args.mode, base=base, workers=args.workers)
        if args.mode == 'toy':
            for (eps, nu), sub in table.groupby(['epsilon', 'nu']):
                logger.info(f"epsilon={eps:g} nu={nu:g}: {args.vary} flips at {th.flip_point(sub, args.vary)}")
        path = _out(args, "sweep.csv")
        io.write_sweep(table, path)
        manifest.outputs.append(path)

@command_cls('verify-multipliers')
class VerifyMultipliersCommand(Command):
    help = "sample the multiplier lemmas and write a pass/fail report"

    def add_arguments(self, parser):
        parser.add_argument('--samples', type=float, default=1e5)
        parser.add_argument('--fd-samples', type=int, default=200)
        parser.add_argument('--config', help="flat YAML file with multiplier keys")
        parser.add_argument('--nu', type=float)
        parser.add_argument('--gamma2', type=float)
        parser.add_argument('--s', type=float)
        parser.add_argument('--K', type=float)
        parser.add_argument('--c', type=float)
        parser.add_argument('--seed', type=int, default=0)

    def run(self, args, manifest):
        over = _overrides(args, cfg.documented_keys('multipliers'))
        if args.config is None and over.get('nu') is None:
            over['nu'] = 1e-3
        params = cfg.load_config(args.config, 'multipliers', over)
        manifest.config = params.to_dict()
        manifest.seed = args.seed
        reports = mp.verify_lemmas(args.samples, u.PRNGKey(("verify-multipliers", args.seed)),
                                   params, fd_samples=args.fd_samples)
        path = _out(args, "multiplier_report.csv")
        io.write_table(pd.DataFrame([dataclasses.asdict(r) for r in reports]), path)
        manifest.outputs.append(path)
        failed = [r.lemma for r in reports if not r.passed]
        if failed:
            raise ValueError(f"multiplier checks failed: {failed}")

@command_cls('toy')
class ToyCommand(Command):
    help = "integrate the two-mode threshold toy model"

    def add_arguments(self, parser):
        parser.add_argument('--config', help="flat YAML file with toy keys")
        parser.add_argument('--alpha', type=float)
        parser.add_argument('--beta', type=float)
        parser.add_argument('--epsilon', type=float)
        parser.add_argument('--nu', type=float)
        parser.add_argument('--t-end', dest='t_end', type=float)

    def run(self, args, manifest):
        config = cfg.load_config(args.config, 'toy', _overrides(args, cfg.documented_keys('toy')))
        manifest.config = config.to_dict()
        res = th.integrate_toy(config)
        logger.info(f"alpha={config.alpha:g} beta={config.beta:g}: "
                    f"{'bounded' if res.bounded else 'growth'} (max X2 ratio {res.max_ratio:.4g} at t = {res.t_of_max:.4g})")
        path = _out(args, "toy.csv")
        io.write_table(pd.DataFrame({'t': res.t, 'X2_ratio': res.X2_ratio,
                                     'theta02_ratio': res.theta02_ratio}), path)
        manifest.outputs.append(path)

# ====================
# entry point
# ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="couettelab", description=__doc__.splitlines()[0])
    parser.add_argument('-v', '--verbose', action='count', default=0)
    parser.add_argument('-q', '--quiet', action='count', default=0)
    parser.add_argument('--log-level', choices=['debug', 'info', 'warning', 'error', 'critical'],
                        help="set every couettelab logger to this level (overrides -v/-q)")
    sub = parser.add_subparsers(dest='command', required=True)
    for name, cls in COMMAND_REGISTRY.items():
        p = sub.add_parser(name, help=cls.help)
        p.add_argument('--out', default='.', help="output directory")
        cls().add_arguments(p)
    return parser

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    u.set_verbosity(int(np.clip(2 + args.verbose - args.quiet, 0, 3)))
    if args.log_level:
        u.set_logging_level(args.log_level)

    manifest = io.RunManifest(command=args.command, config={}, start=io.now())
    status = 0
    try:
        u.num_threads()
        os.makedirs(args.out, exist_ok=True)
        COMMAND_REGISTRY[args.command]().run(args, manifest)
    except sim.NumericalAbort as e:
        logger.error(f"{args.command} aborted: {e}")
        manifest.config['aborted_at'] = e.t
        status = 2
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        status = 1
    manifest.end = io.now()
    if manifest.outputs or status == 2:
        try:
            io.append_manifest(manifest, _out(args, MANIFEST))
        except (ValueError, OSError) as e:
            logger.error(f"cannot record manifest: {e}")
            status = status or 1
    return status
