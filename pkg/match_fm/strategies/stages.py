import logging

import numpy as np

from fiber_dirac.scan import scan_instanton_curve
from higgs_spectral.spectral import compactify, eigen_curve
from nahm.transform import sample_higgs

from ..comparison import fm_support, fiber_iso_check, holonomy_pair, standard_loops
from ..metric import hausdorff

logger = logging.getLogger(__name__)

# Extra reach of the fitted w-window beyond the largest Higgs eigenvalue.
WINDOW_PAD = 0.5


def compactified_instanton(cloud, punctures):
    """(xi, w) of an instanton cloud with the points (+-xi0, infinity) added."""
    xi = np.concatenate([cloud.xi, np.asarray(punctures, dtype=complex)])
    w = np.concatenate([cloud.w, np.full(len(punctures), complex(np.inf, 0.0))])
    return xi, w


class BaseStage:
    """Base class for all match stages."""

    name = 'base'

    def apply(self, state, cfg):
        return state


class HiggsSampleStage(BaseStage):
    name = 'higgs_sample'

    def apply(self, state, cfg):
        state.sample = sample_higgs(cfg.transform, cfg.xi_grid(), workers=cfg.workers, radius=cfg.puncture_radius)
        return state


class HiggsCurveStage(BaseStage):
    name = 'higgs_curve'

    def apply(self, state, cfg):
        state.higgs_cloud = eigen_curve(state.sample, workers=cfg.workers, lat=cfg.lat)
        return state


class InstantonCurveStage(BaseStage):
    name = 'instanton_curve'

    def apply(self, state, cfg):
        radius = cfg.w_radius
        if radius is None:
            w = state.higgs_cloud.w
            finite = np.abs(w[np.isfinite(w)])
            radius = float(finite.max(initial=0.0)) + WINDOW_PAD
        state.w_radius = radius
        state.instanton_cloud = scan_instanton_curve(
            state.model, cfg.xi_grid(), cfg.w_grid(radius),
            tolerances={'puncture_radius': cfg.puncture_radius}, N=cfg.fiber_N, workers=cfg.workers,
        )
        return state


class HausdorffStage(BaseStage):
    """Both curves compared with their points at infinity."""

    name = 'hausdorff'

    def apply(self, state, cfg):
        punctures = state.model.punctures
        instanton = compactified_instanton(state.instanton_cloud, punctures)
        higgs = compactify(state.higgs_cloud, punctures, lat=cfg.lat)
        state.hausdorff = hausdorff(instanton, higgs, lat=cfg.lat)
        return state


class FiberPairingStage(BaseStage):
    name = 'fiber_pairing'

    def apply(self, state, cfg):
        points = state.instanton_cloud.points
        if not points or not cfg.fiber_points:
            return state
        picks = sorted(set(np.linspace(0, len(points) - 1, cfg.fiber_points).round().astype(int).tolist()))
        state.fiber_defects = [
            {
                'xi': [points[i].xi.real, points[i].xi.imag],
                'w': [points[i].w.real, points[i].w.imag],
                'defect': fiber_iso_check(state.model, cfg, points[i]),
            }
            for i in picks
        ]
        return state


class HolonomyStage(BaseStage):
    name = 'holonomy'

    def apply(self, state, cfg):
        results = []
        for loop in standard_loops(state.model, cfg, state.higgs_cloud):
            gamma, lam = holonomy_pair(state.model, cfg, loop['points'], sample=state.sample)
            results.append({
                'name': loop['name'], 'sheet': loop['sheet'], 'corner': loop['corner'],
                'gamma': [gamma.real, gamma.imag], 'lam': [lam.real, lam.imag],
                'difference': float(abs(gamma - lam)),
            })
        state.holonomy = results
        return state


class SupportStage(BaseStage):
    name = 'support'

    def apply(self, state, cfg):
        support, rank = fm_support(
            state.model, cfg.xi_grid(), cfg.w_grid(state.w_radius), N=cfg.fiber_N, workers=cfg.workers,
            tolerances={'puncture_radius': cfg.puncture_radius},
        )
        state.support, state.rank = support, rank
        punctures = state.model.punctures
        higgs = compactify(state.higgs_cloud, punctures, lat=cfg.lat)
        state.fm_support_distance = max(hausdorff(compactified_instanton(support, punctures), higgs, lat=cfg.lat))
        return state


MATCH_STAGES = (
    HiggsSampleStage(),
    HiggsCurveStage(),
    InstantonCurveStage(),
    HausdorffStage(),
    FiberPairingStage(),
    HolonomyStage(),
    SupportStage(),
)
