import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from curve_model.sheets import sheet_graph  # noqa: E402

logger = logging.getLogger(__name__)

# Fraction of tau at which the curve plot slices the dual torus.
SLICE_HEIGHT = 0.37
SLICE_POINTS = 121


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg')
    plt.close(fig)
    logger.info('wrote plot %s', path)
    return path


def slice_sheets(model, height=SLICE_HEIGHT, points=SLICE_POINTS):
    """Sheets w_i(xi) along xi = t + height * tau, t in [0, 1): arrays (t, w, sheet)."""
    t = np.linspace(0.0, 1.0, points, endpoint=False)
    rows = sheet_graph(model, t + height * model.lat.tau)
    offset = height * model.lat.tau
    return (
        np.array([(xi - offset).real for xi, _, _ in rows]),
        np.array([w for _, w, _ in rows], dtype=complex),
        np.array([index for _, _, index in rows], dtype=int),
    )


def plot_curve_slice(model, path, height=SLICE_HEIGHT):
    t, w, sheet = slice_sheets(model, height)
    fig, (ax_re, ax_im) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for index in np.unique(sheet):
        mask = sheet == index
        ax_re.plot(t[mask], w[mask].real, '.', ms=3, label=f'sheet {index}')
        ax_im.plot(t[mask], w[mask].imag, '.', ms=3)
    ax_re.set_ylabel('Re w')
    ax_im.set_ylabel('Im w')
    ax_im.set_xlabel(f'Re xi  (Im xi = {height:g} Im tau)')
    ax_re.legend(loc='best', fontsize=8)
    ax_re.set_title(f'spectral curve k={model.k}, xi0={model.xi0:.3g}')
    fig.tight_layout()
    return _save(fig, path)


def plot_clouds(path, instanton=None, higgs=None, title=None):
    """Scatter of the curve clouds projected to the xi-torus and to the w-plane."""
    fig, (ax_xi, ax_w) = plt.subplots(1, 2, figsize=(11, 5))
    for cloud, marker, label in ((instanton, 'o', 'S (instanton)'), (higgs, 'x', 'C (Higgs)')):
        if cloud is None or not len(cloud):
            continue
        w = np.asarray(cloud.w)
        finite = np.isfinite(w)
        ax_xi.plot(cloud.xi.real, cloud.xi.imag, marker, ms=3, mfc='none', label=label)
        ax_w.plot(w[finite].real, w[finite].imag, marker, ms=3, mfc='none', label=label)
    ax_xi.set_xlabel('Re xi')
    ax_xi.set_ylabel('Im xi')
    ax_w.set_xlabel('Re w')
    ax_w.set_ylabel('Im w')
    ax_w.legend(loc='best', fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
