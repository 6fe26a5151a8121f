from abc import ABC, abstractmethod

import numpy as np

from fiber_dirac.models import FlatPair
from fiber_dirac.operators import assemble_fiber, singular_triplets, summand_frame

from ..exceptions import DimensionMismatch
from ..models import LocalizedFrames, VectorFrames
from ..planar import assemble_planar


class TransformMode(ABC):
    @abstractmethod
    def frames(self, cfg, xi):
        pass


class LocalizedMode(TransformMode):
    """Fiber kernel vectors at the sheets w_i(xi), each times a radial bump."""

    def frames(self, cfg, xi):
        xi = complex(xi)
        centers = np.asarray(cfg.family.sheets(xi), dtype=complex)
        if len(centers) != cfg.k:
            raise DimensionMismatch(f'{len(centers)} sheets over xi={xi:.6g}, expected k={cfg.k}')
        fiber, residuals = [], []
        for w in centers:
            eta = cfg.family.fiber_eta(xi, w)
            # eta is lifted next to xi, so the sheet's mode lives on L_-eta, also where eta = -eta.
            frame = summand_frame(assemble_fiber(FlatPair(eta, cfg.lat), xi, cfg.N), 1, w=w, eta=eta)
            fiber.append(frame.vector)
            residuals.append(frame.residual)
        size = 2 * (2 * cfg.N + 1) ** 2
        return LocalizedFrames(
            xi=xi, centers=centers, fiber=np.array(fiber, dtype=complex).reshape(len(centers), size),
            width=cfg.profile_width, residuals=np.array(residuals),
        )


class FullMode(TransformMode):
    """The k smallest singular vectors of the assembled planar operator, gap-certified."""

    def frames(self, cfg, xi):
        op = assemble_planar(cfg, xi)
        k = cfg.k
        values, vectors = singular_triplets(op, k + 1)
        if k and not values[k] > cfg.gap_factor * values[k - 1]:
            raise DimensionMismatch(
                f'no spectral gap after {k} singular values at xi={complex(xi):.6g}: '
                f'{values[k - 1]:.3e} vs {values[k]:.3e} (factor {cfg.gap_factor})'
            )
        vectors = vectors[:, :k]
        pivots = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(k)]
        vectors = vectors * (np.conj(pivots) / np.abs(pivots))[None, :]
        residuals = np.linalg.norm(op.matrix @ vectors, axis=0)
        return VectorFrames(
            xi=complex(xi), vectors=vectors, w=op.w, singular_values=values, residuals=residuals,
            modes=op.sigma.shape[1],
        )


TRANSFORM_MODES = {
    'LOCALIZED': LocalizedMode(),
    'FULL': FullMode(),
}
