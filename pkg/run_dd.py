# run_dd.py
"""
Command-line front end.

    python run_dd.py gen-data --model hatw2.json --count 10000 --noise 0.0 --seed 1 --filter-mb --augment 4 --out data.csv
    python run_dd.py certify --model hatw2.json --property coercivity --budget 100000 --seed 1
    python run_dd.py solve-classical --square 8 --bc stretch4.json --model hatw2.json --fields-out fields.csv
    python run_dd.py solve-dd --square 8 --bc stretch4.json --data data.csv --config dd.json --out report.json
    python run_dd.py study-convergence --model hatw2.json --counts 100,1000,10000 --noise 0.0 --seed 1
    python run_dd.py report report_a.json report_b.json --csv summary.csv

Exit codes: 0 success, 1 usage or input error, 2 certificate violated,
3 solver did not converge.
"""

import argparse
import logging
import sys
import time

from certificates import PROPERTIES, certify
from dd_solver import NON_CONVERGED, DDConfig, solve_dd, study_convergence
from fem_core import (
    ConvergenceError, SingularSystemError, load_problem, solve_classical, square_mesh, stretch_bc,
    total_energy,
)
from file_io import (
    ParseError, dumps_json, load_dataset, load_mesh_problem, load_model, read_json,
    read_table, save_dataset, write_fields, write_json, write_table,
)
from material_data import (
    LocalDataSet, augment_orbit, filter_moment_equilibrium, sample_graph,
)
from material_models import BUILTIN_LAWS, builtin_law
from report_formatter import format_markdown, summarize
from settings import LOG_FORMAT, SOLVER_DEFAULTS
from tensor_core import moment_residual

logger = logging.getLogger('DD-Runner')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATED = 2
EXIT_NOT_CONVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _add_mesh_arguments(p, required=True):
    group = p.add_mutually_exclusive_group(required=required)
    group.add_argument('--mesh', help='mesh JSON file, or a problem saved with --mesh-out')
    group.add_argument('--square', type=int, metavar='N', help='built-in N x N unit-square mesh')
    p.add_argument('--dirichlet', default='left,right',
                   help='Dirichlet sides of the built-in mesh (default: left,right)')
    p.add_argument('--bc', help='boundary-condition JSON file')
    p.add_argument('--mesh-out', help='save the assembled mesh and BCs as JSON')


def build_parser():
    parser = _Parser(prog='run_dd.py', description='Data-Driven finite elasticity toolkit')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='more logging (repeatable)')
    parser.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    sub = parser.add_subparsers(dest='command', parser_class=_Parser)

    p = sub.add_parser('gen-data', help='sample a point cloud from a model graph')
    p.add_argument('--model', required=True, help='model JSON file')
    p.add_argument('--count', type=int, required=True)
    p.add_argument('--box', type=float, default=SOLVER_DEFAULTS['data_box'],
                   help='half-width of the F box around the identity (default: %(default)s)')
    p.add_argument('--noise', type=float, default=0.0, help='relative stress noise')
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--filter-det', action='store_true', help='keep only det F > 0')
    p.add_argument('--filter-mb', '--moment-filter', dest='moment_filter', action='store_true',
                   help='drop points violating moment equilibrium')
    p.add_argument('--augment', '--orbit', dest='orbit', type=int, default=1, metavar='M',
                   help='orbit augmentation with M rotations')
    p.add_argument('--out', required=True, help='output CSV (metadata in <out>.meta.json)')

    p = sub.add_parser('certify', help='search for a violation of a structural property')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--model', help='model JSON file')
    source.add_argument('--law', choices=sorted(BUILTIN_LAWS), help='built-in stress law')
    p.add_argument('--n', type=int, default=2, help='dimension for --law')
    p.add_argument('--data', help='data set CSV for frame_indifference / moment_equilibrium')
    p.add_argument('--property', required=True, choices=PROPERTIES)
    p.add_argument('--budget', type=int, required=True)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--p', type=float, help='coercivity / growth exponent')
    p.add_argument('--grid', type=int, help='quadrature cells per axis (quasimonotonicity)')
    p.add_argument('--c-prime', type=float, help="fixed c' for polymonotonicity_3d")
    p.add_argument('--out', help='certificate JSON (stdout if omitted)')

    p = sub.add_parser('solve-classical', help='Newton reference solve')
    _add_mesh_arguments(p)
    p.add_argument('--model', required=True)
    p.add_argument('--newton-tol', type=float, default=None)
    p.add_argument('--max-iter', type=int, default=None)
    p.add_argument('--out', help='summary JSON')
    p.add_argument('--fields-out', help='element fields CSV')
    p.add_argument('--timing', action='store_true', help='include wall time in the JSON')

    p = sub.add_parser('solve-dd', help='alternating Data-Driven solve')
    _add_mesh_arguments(p)
    p.add_argument('--data', required=True, help='data set CSV')
    p.add_argument('--config', help='DD config JSON (must contain a seed)')
    p.add_argument('--seed', type=int, help='seed when no config file is given')
    p.add_argument('--model', help='model JSON for the classical warm start')
    p.add_argument('--out', help='report JSON (stdout if omitted)')
    p.add_argument('--fields-out', help='element fields CSV')
    p.add_argument('--timing', action='store_true', help='include wall time in the report')

    p = sub.add_parser('study-convergence', help='DD runs over growing graph samples')
    _add_mesh_arguments(p, required=False)
    p.add_argument('--model', required=True)
    p.add_argument('--counts', required=True, help='comma-separated sample counts')
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--config', help='DD config JSON')
    p.add_argument('--out', help='study table CSV')

    p = sub.add_parser('report', help='summarize reports and study tables')
    p.add_argument('paths', nargs='*', help='report JSON or study CSV files')
    p.add_argument('--csv', help='also write the summary as CSV')
    return parser


def _configure_logging(args):
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _mesh_problem(args):
    if args.mesh:
        mp = load_mesh_problem(args.mesh, args.bc)
    elif args.square is not None:
        sides = tuple(s.strip() for s in args.dirichlet.split(',') if s.strip())
        bc = read_json(args.bc) if args.bc else {}
        mp = load_problem(square_mesh(args.square, sides), bc, name=f"square{args.square}")
    else:
        # stretch benchmark on the default square
        N = SOLVER_DEFAULTS['study_square']
        bc = read_json(args.bc) if args.bc else stretch_bc(SOLVER_DEFAULTS['study_stretch'])
        mp = load_problem(square_mesh(N), bc, name=f"square{N}")
    if args.mesh_out:
        write_json(args.mesh_out, mp.to_dict())
    return mp


def _emit_json(path, data):
    if path:
        write_json(path, data)
    else:
        sys.stdout.write(dumps_json(data))


# -- subcommands --------------------------------------------------------------

def cmd_gen_data(args):
    model = load_model(args.model)
    D = sample_graph(model, args.box, args.count, noise=args.noise, seed=args.seed,
                     filter_det=args.filter_det)
    if args.moment_filter:
        D = filter_moment_equilibrium(D)
    if args.orbit > 1:
        D = augment_orbit(D, args.orbit)
    save_dataset(args.out, D)
    return EXIT_OK


def cmd_certify(args):
    subject = load_model(args.model) if args.model else builtin_law(args.law, args.n)
    if args.data:
        subject = load_dataset(args.data)
    elif args.property in ('frame_indifference', 'moment_equilibrium'):
        subject = LocalDataSet.graph(subject)
    cert = certify(subject, args.property, args.budget, args.seed,
                   p=args.p, grid=args.grid, c_prime=args.c_prime)
    _emit_json(args.out, cert.to_dict())
    if cert.violated:
        logger.warning(f"{args.property} violated (min margin {cert.min_margin:.6g})")
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_solve_classical(args):
    mp = _mesh_problem(args)
    model = load_model(args.model)
    started = time.perf_counter()
    u, F, P, info = solve_classical(mp, model, args.newton_tol, args.max_iter, return_info=True)
    summary = {
        'energy': total_energy(mp, model, u),
        'iterations': info['iterations'],
        'residual_history': info['residual_history'],
        'max_moment_residual': float(moment_residual(F, P).max()),
        'elements': mp.num_elements,
    }
    if args.timing:
        summary['wall_time'] = time.perf_counter() - started
    if args.fields_out:
        write_fields(args.fields_out, mp, u, F, P)
    _emit_json(args.out, summary)
    return EXIT_OK


def cmd_solve_dd(args):
    mp = _mesh_problem(args)
    D = load_dataset(args.data)
    if args.config:
        cfg = DDConfig.from_dict(read_json(args.config))
    elif args.seed is not None:
        cfg = DDConfig(seed=args.seed)
    else:
        raise UsageError("solve-dd needs --config or --seed")
    if args.model:
        cfg.model = load_model(args.model)
    report = solve_dd(mp, D, cfg)
    _emit_json(args.out, report.to_dict(timing=args.timing))
    if args.fields_out:
        write_fields(args.fields_out, mp, report.fields.u, report.fields.F, report.fields.P,
                     report.F_data, report.P_data)
    return EXIT_NOT_CONVERGED if report.classification == NON_CONVERGED else EXIT_OK


def cmd_study_convergence(args):
    mp = _mesh_problem(args)
    model = load_model(args.model)
    try:
        counts = [int(c) for c in args.counts.split(',') if c.strip()]
    except ValueError:
        raise UsageError(f"--counts must be comma-separated integers, got '{args.counts}'")
    cfg = DDConfig.from_dict(read_json(args.config)) if args.config else None
    table = study_convergence(mp, model, counts, noise=args.noise, seed=args.seed, cfg=cfg)
    if args.out:
        write_table(args.out, table)
    sys.stdout.write(format_markdown(table))
    return EXIT_OK


def cmd_report(args):
    if not args.paths:
        raise UsageError("report needs at least one input file")
    inputs = []
    for path in args.paths:
        content = read_table(path) if path.endswith('.csv') else read_json(path)
        inputs.append((path, content))
    table = summarize(inputs)
    sys.stdout.write(format_markdown(table))
    if args.csv:
        write_table(args.csv, table)
    return EXIT_OK


COMMANDS = {
    'gen-data': cmd_gen_data,
    'certify': cmd_certify,
    'solve-classical': cmd_solve_classical,
    'solve-dd': cmd_solve_dd,
    'study-convergence': cmd_study_convergence,
    'report': cmd_report,
}


def run(argv):
    """Execute one subcommand and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)
    if not args.command:
        sys.stderr.write(parser.format_help())
        return EXIT_USAGE

    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        logger.error(str(e))
        sys.stderr.write(parser.format_usage())
        return EXIT_USAGE
    except (ConvergenceError, SingularSystemError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_NOT_CONVERGED
    except (ParseError, OSError, ValueError, KeyError, TypeError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_USAGE


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
