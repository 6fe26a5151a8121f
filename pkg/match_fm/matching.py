import logging

from .comparison import as_match_config
from .exceptions import ConfigurationError
from .models import MatchReport, MatchState
from .pipelines.spectral_pipeline import SpectralPipeline
from .strategies.stages import MATCH_STAGES

logger = logging.getLogger(__name__)


def build_report(state: MatchState, cfg):
    k = state.model.k
    rank = [
        {'xi': [xi.real, xi.imag], 'rank': int(r)}
        for xi, r in sorted(state.rank.items(), key=lambda item: (item[0].real, item[0].imag))
    ]
    return MatchReport(
        hausdorff_S_to_C=float(state.hausdorff[0]),
        hausdorff_C_to_S=float(state.hausdorff[1]),
        holonomy=state.holonomy,
        fiber_defects=state.fiber_defects,
        fm_support_distance=state.fm_support_distance,
        rank=rank,
        metadata={
            **cfg.describe(),
            'w_radius': state.w_radius,
            'points_S': len(state.instanton_cloud),
            'points_C': len(state.higgs_cloud),
            'xi_nodes': len(state.sample),
            'unassigned': state.higgs_cloud.metadata.get('unassigned', 0),
            'rank_defects': sum(1 for entry in rank if entry['rank'] != k),
        },
    )


def run_match(model, cfg, stages=MATCH_STAGES):
    """The match report together with the final pipeline state (clouds, sample)."""
    cfg = as_match_config(cfg)
    if cfg.transform.model is not None and cfg.transform.model is not model:
        raise ConfigurationError('the transform configuration was built for a different curve model')
    state = SpectralPipeline(stages).run(MatchState(model=model), cfg)
    report = build_report(state, cfg)
    logger.info('match: hausdorff %.3e (S->C %.3e, C->S %.3e), %d loops',
                report.hausdorff, report.hausdorff_S_to_C, report.hausdorff_C_to_S, len(report.holonomy))
    report.timings = dict(state.timings)
    return report, state


def match_curves(model, cfg, stages=MATCH_STAGES):
    """
    Run both constructions on the same grids and compare them: curve
    distance, fiber pairing, holonomies and Fourier-Mukai support.
    """
    report, _ = run_match(model, cfg, stages)
    return report
