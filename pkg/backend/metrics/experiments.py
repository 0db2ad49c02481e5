"""
Experiment runners behind the CLI and the API. Each returns a summary dict,
a detail DataFrame and an optional certificate verdict.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

import numpy as np
import pandas as pd

from backend.config import ExperimentConfig
from backend.core.errors import ConfigError, CurveError
from backend.core.numerics import QuadNum, Vec, approx, render
from backend.core.surface import ChartSegment, HalfTranslationSurface, SurfacePoint, Transversal
from backend.core.surface_manager import SurfaceManager
from backend.core.utils import tagged_frame
from backend.metrics import curves, dynamics, flow, graphdist

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

STATUS_PASS = 0
STATUS_ERROR = 1
STATUS_FAIL = 2
STATUS_CAP = 3


@dataclass
class ExperimentResult:
    experiment: str
    surface: str
    summary: dict
    detail: pd.DataFrame = field(default_factory=pd.DataFrame)
    passed: Optional[bool] = None

    @property
    def status(self) -> int:
        return STATUS_FAIL if self.passed is False else STATUS_PASS

    @property
    def verdict(self) -> str:
        return {True: 'PASS', False: 'FAIL', None: 'n/a'}[self.passed]

    def to_dict(self, config: Optional[ExperimentConfig] = None) -> dict:
        out = {'schemaVersion': SCHEMA_VERSION, 'experiment': self.experiment,
               'surface': self.surface, 'verdict': self.verdict, 'summary': self.summary}
        if config is not None:
            out['seed'] = config.seed
            out['config'] = config.model_dump()
        return out


# ─── Serialisation ───────────────────────────────────────────

def encode(value: Any) -> Any:
    """json.dumps default: exact literal plus a 12-digit approximation for QuadNums."""
    if isinstance(value, QuadNum):
        return {'value': render(value), 'approx': approx(value, 12)}
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, (Vec, SurfacePoint, ChartSegment)):
        return str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    raise TypeError(f'cannot serialise {type(value).__name__}')


def to_json(result: ExperimentResult, config: Optional[ExperimentConfig] = None) -> str:
    return json.dumps(result.to_dict(config), default=encode, sort_keys=True, indent=2)


def write_outputs(result: ExperimentResult, config: ExperimentConfig) -> list[str]:
    """Write `<experiment>.json` and `<experiment>.csv` into config.out."""
    if not config.out:
        return []
    os.makedirs(config.out, exist_ok=True)
    stem = os.path.join(config.out, result.experiment)
    with open(stem + '.json', 'w', encoding='utf-8') as fh:
        fh.write(to_json(result, config) + '\n')
    result.detail.to_csv(stem + '.csv', index=False, lineterminator='\n')
    log.info('wrote %s.json and %s.csv', stem, stem)
    return [stem + '.json', stem + '.csv']


# ─── Helpers ─────────────────────────────────────────────────

def _transversal(s: HalfTranslationSurface, name: Optional[str]) -> Transversal:
    if name:
        if name not in s.transversals:
            raise ConfigError('transversal', f'{s.name} has no transversal {name!r}')
        return s.transversals[name]
    if not s.transversals:
        raise ConfigError('transversal', f'{s.name} declares no transversal')
    return s.transversals[sorted(s.transversals)[0]]


def _x0(cfg: ExperimentConfig, t: Transversal) -> QuadNum:
    x0 = cfg.number('x0')
    if x0 is None:
        return t.x0 + t.width / 3
    if not t.x0 <= x0 < t.x1:
        raise ConfigError('x0', f'outside transversal {t.name}')
    return x0


# ─── Runners ─────────────────────────────────────────────────

def run_validate(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    summary = manager.summary(s.name)
    rows = [{'cone': c.id, 'angle': c.angle_label, 'k': c.k, 'corners': len(c.corners),
             'singular': not c.is_regular} for c in s.cone_points]
    autos = [dynamics.AffineAuto.from_block(s, block).verify(strict=False)
             for _, block in sorted(s.automorphisms.items())]
    summary['automorphisms'] = autos
    passed = summary['gaussBonnet']['holds'] and summary['riemannHurwitz'] \
        and all(a['valid'] for a in autos)
    return ExperimentResult('validate', s.name, summary, pd.DataFrame(rows), passed)


def run_flow(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    rng = cfg.rng()
    cap = cfg.number('cap')
    t = _transversal(s, cfg.transversal) if s.transversals else None
    rows = []
    for trial in range(cfg.trials):
        traj = flow.flow_vertical(s, s.random_point(rng), cap, stop_at=t)
        rows.append({'trial': trial, **traj.to_dict()})
    leaves = flow.singular_leaves(s, cap, stop_at=t)
    detail = tagged_frame(rows, {'length': 'exact'})
    terminals = detail['terminal'].value_counts().to_dict() if len(detail) else {}
    summary = {'trials': cfg.trials, 'cap': cap, 'transversal': t.name if t else None,
               'terminals': terminals, 'singularLeaves': len(leaves),
               'singularLeafTerminals': sorted({leaf.trajectory.terminal for leaf in leaves})}
    return ExperimentResult('flow', s.name, summary, detail)


def run_iet(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    t = _transversal(s, cfg.transversal)
    iet = flow.first_return_map(t, s, cfg.number('cap'))
    summary = {'transversal': t.name, 'intervals': len(iet.intervals), 'permutation': iet.permutation,
               'flips': [sg < 0 for sg in iet.signs], 'rotation': iet.is_rotation(),
               'fubiniTotal': iet.fubini_total(), 'area': s.area(),
               'singularPoints': iet.singular_points}
    passed = None
    if iet.is_rotation():
        x0 = _x0(cfg, t)
        census = flow.three_gap_census(iet, x0, cfg.iterates)
        summary['maxDistinctGaps'] = int(census['distinctGaps'].max())
        summary['nearReturnTimes'] = [k for k, _ in flow.near_return_times(iet, x0, cfg.iterates)]
        passed = summary['maxDistinctGaps'] <= 3
    return ExperimentResult('iet', s.name, summary, iet.to_frame(), passed)


def run_return_time(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    t = _transversal(s, cfg.transversal)
    width = min(cfg.number('B'), t.width)
    g = [ChartSegment(t.poly, Vec(t.x0, t.y), Vec(t.x0 + width, t.y))]
    iet = flow.first_return_map(t, s, cfg.number('cap'))
    report = flow.fast_return_constant(s, g, width, cfg.trials, cfg.number('cap'), cfg.rng(), iet, cfg.jobs)
    detail = tagged_frame(report.rows, {'hitLength': 'empirical'})
    return ExperimentResult('return-time', s.name, {'width': width, **report.to_dict()},
                            detail, report.confirmed)


def _target_curve(cfg: ExperimentConfig, s: HalfTranslationSurface) -> curves.PLCurve:
    try:
        return curves.straight_loop(s, *cfg.alpha)
    except CurveError:
        t = _transversal(s, cfg.transversal)
        return flow.return_loop(s, t, _x0(cfg, t), cfg.number('cap'))


def run_target(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    gamma = _target_curve(cfg, s)
    report = flow.target_check(s, gamma, cfg.number('cap'), cfg.trials, cfg.rng(), cfg.jobs)
    detail = pd.DataFrame(report.rows)
    summary = {'curve': curves.curve_to_text(gamma), **report.to_dict()}
    return ExperimentResult('target', s.name, summary, detail, report.fraction == 1)


def run_bicorn(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    alpha = curves.straight_loop(s, *cfg.alpha)
    beta = curves.straight_loop(s, *cfg.beta)
    found = curves.bicorns(alpha, beta)
    steps = curves.bicorn_surgery(alpha, beta)
    counts = [b.crossings_with_beta for b in steps]
    rows = [{'step': i, 'curve': b.curve.name, 'crossingsWithBeta': b.crossings_with_beta,
             'homology': str(b.homology), 'l1Length': b.curve.l1_length()}
            for i, b in enumerate(steps)]
    # the target closes the sequence; the surgery curves before it strictly decrease
    decreasing = all(a > b for a, b in zip(counts[:-1], counts[1:-1])) and counts[-1] == 0
    summary = {'alpha': list(cfg.alpha), 'beta': list(cfg.beta),
               'intersections': len(curves.intersections(alpha, beta)),
               'bicorns': len(found), 'nonseparating': sum(b.nonseparating for b in found),
               'pathLength': len(steps) - 1, 'crossingsDecrease': decreasing}
    if graphdist.is_torus(s):
        d = graphdist.farey_distance(graphdist.slope_of(alpha), graphdist.slope_of(beta), cross_check=True)
        slopes = [graphdist.slope_of(b.curve) for b in steps]
        summary['fareyDistance'] = d
        summary['stepsAdjacent'] = all(graphdist.farey_distance(x, y) <= 1 for x, y in zip(slopes, slopes[1:]))
        summary['withinFareyWindow'] = d <= len(steps) - 1 <= 4 * d + 4
    detail = tagged_frame(rows, {'l1Length': 'exact'})
    return ExperimentResult('bicorn', s.name, summary, detail, decreasing)


def _sequence(cfg: ExperimentConfig, s: HalfTranslationSurface) -> list[curves.PLCurve]:
    x0 = _x0(cfg, _transversal(s, cfg.transversal))
    if cfg.sequence == 'constant':
        return graphdist.constant_sequence(graphdist.golden_sequence(s, 1, x0)[0], cfg.count)
    golden = graphdist.golden_sequence(s, cfg.count, x0)
    if cfg.sequence == 'alternating':
        return graphdist.alternating_sequence(golden, graphdist.horizontal_base(s))
    return golden


def run_converge(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    schedule = graphdist.Schedule.load(cfg.schedule) if cfg.schedule \
        else graphdist.Schedule.default(cfg.iterates)
    seq = _sequence(cfg, s)
    base = graphdist.horizontal_base(s) if graphdist.is_torus(s) else None
    report = graphdist.convergence_certificate(seq, schedule, base, jobs=cfg.jobs)
    summary = {'sequence': cfg.sequence, 'count': len(seq), 'schedule': schedule.to_dict(),
               **{k: v for k, v in report.to_dict().items() if k != 'records'}}
    if base is not None:
        summary['classes'] = [str(graphdist.slope_of(c)) for c in seq]
    return ExperimentResult('converge', s.name, summary, report.to_frame(), report.passed)


def run_axis(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    s = manager.resolve(cfg.surface)
    if cfg.automorphism is None and not s.automorphisms:
        raise ConfigError('automorphism', f'{s.name} declares no automorphism')
    name = cfg.automorphism or sorted(s.automorphisms)[0]
    f = dynamics.AffineAuto.named(s, name)
    check = f.verify()
    orbit = dynamics.axis_experiment(f, curves.straight_loop(s, *cfg.alpha), cfg.iterates, cfg.jobs)
    summary = {'automorphism': name, 'anosov': check['anosov'], 'expansion': check['expansion'],
               **{k: v for k, v in orbit.to_dict().items() if k != 'records'}}
    return ExperimentResult('axis', s.name, summary, orbit.records)


RUNNERS: dict[str, Callable[[ExperimentConfig, SurfaceManager], ExperimentResult]] = {
    'validate': run_validate,
    'flow': run_flow,
    'iet': run_iet,
    'return-time': run_return_time,
    'target': run_target,
    'bicorn': run_bicorn,
    'converge': run_converge,
    'axis': run_axis,
}


def run(cfg: ExperimentConfig, manager: SurfaceManager) -> ExperimentResult:
    log.info('running %s on %s (seed %d)', cfg.experiment, cfg.surface, cfg.seed)
    s = manager.resolve(cfg.surface)
    key = manager.get_cache_key(s.name, cfg.experiment, cfg.model_dump(exclude={'out', 'jobs'}))
    cached = manager.get_cached(key)
    if cached is not None:
        return cached
    return manager.cache_result(key, RUNNERS[cfg.experiment](cfg, manager))
