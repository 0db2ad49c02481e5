"""
Command-line runner: one experiment per invocation.

    python -m backend.cli validate --surface pillowcase
    python -m backend.cli converge --surface golden-sheared-torus --schedule data/schedules/fibonacci.json --out results/
"""

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from backend import config as settings
from backend.core.errors import LabError
from backend.core.surface_manager import SurfaceManager
from backend.metrics import experiments

log = logging.getLogger(__name__)


def _slope(text: str) -> tuple[int, int]:
    try:
        p, q = (int(x) for x in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected "p,q", got {text!r}')
    return p, q


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--surface', help='surface name in the data directory or path to a .surf file')
    common.add_argument('--config', help='JSON file mirroring these flags (flags win)')
    common.add_argument('--out', help='directory for <experiment>.json and <experiment>.csv')
    common.add_argument('--seed', type=int, help='seed for every sampled quantity')
    common.add_argument('--jobs', type=int, help='worker threads for sampled trials, axis iterates and certificates')
    common.add_argument('--eps', help='window width ε (number literal, e.g. 1/8 or 1/2+1/2√5)')
    common.add_argument('--B', dest='B', help='size bound B, or target width for return-time')
    common.add_argument('--trials', type=int, help='number of sampled starts')
    common.add_argument('--cap', help='length cap for traced leaves')
    common.add_argument('--iterates', type=int, help='orbit length, or schedule length when no --schedule')
    common.add_argument('--count', type=int, help='number of curves in a convergence sequence')
    common.add_argument('--schedule', help='JSON schedule of (B, eps) entries')
    common.add_argument('--transversal', help='transversal name declared in the surface file')
    common.add_argument('--automorphism', help='automorphism name declared in the surface file')
    common.add_argument('--alpha', type=_slope, help='torus class p,q of the first curve')
    common.add_argument('--beta', type=_slope, help='torus class p,q of the second curve')
    common.add_argument('--x0', help='start abscissa on the transversal')
    common.add_argument('--sequence', choices=['golden', 'constant', 'alternating'])
    common.add_argument('-v', '--verbose', action='count', default=0)

    parser = argparse.ArgumentParser(prog='bsflab', description='Exact experiments on bifoliated flat surfaces.')
    sub = parser.add_subparsers(dest='experiment', required=True)
    for name in settings.EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def _configure_logging(verbose: int):
    level = settings.log_level()
    if verbose:
        level = 'DEBUG' if verbose > 1 else 'INFO'
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s',
                        stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    flags = {k: v for k, v in vars(args).items() if k not in ('config', 'verbose')}
    try:
        cfg = settings.load_config(flags, args.config)
        manager = SurfaceManager(settings.data_dir())
        result = experiments.run(cfg, manager)
    except LabError as e:
        log.debug('experiment failed', exc_info=True)
        print(json.dumps(e.to_dict(), sort_keys=True), file=sys.stderr)
        return e.exit_status

    written = experiments.write_outputs(result, cfg)
    if written:
        print(f'{result.experiment}: {result.verdict} ({", ".join(written)})')
    else:
        print(experiments.to_json(result, cfg))
    return result.status


if __name__ == '__main__':
    sys.exit(main())
