import logging
import time

logger = logging.getLogger(__name__)


class SpectralPipeline:
    def __init__(self, stages):
        self.stages = stages

    def run(self, state, cfg):
        for stage in self.stages:
            started = time.monotonic()
            state = stage.apply(state, cfg)
            state.timings[stage.name] = time.monotonic() - started
            logger.info('stage %s done in %.1fs', stage.name, state.timings[stage.name])
        return state
