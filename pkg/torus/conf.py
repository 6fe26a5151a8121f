from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from contextvars import ContextVar, copy_context
from types import MappingProxyType

from django.conf import settings

# Per-run replacements of SPECTRAL_LAB entries; settings.SPECTRAL_LAB itself is never written.
_overrides = ContextVar('spectral_lab_overrides', default=MappingProxyType({}))


def lab_setting(name):
    """Return a numerical default from ``settings.SPECTRAL_LAB``, or the active override."""
    active = _overrides.get()
    if name in active:
        return active[name]
    return settings.SPECTRAL_LAB[name]


def lab_snapshot():
    """Read-only view of the effective settings in the current context."""
    return MappingProxyType({**settings.SPECTRAL_LAB, **_overrides.get()})


@contextmanager
def lab_overrides(values):
    """Replace SPECTRAL_LAB entries for the enclosed block; None values leave the default."""
    merged = {**_overrides.get(), **{name: value for name, value in values.items() if value is not None}}
    token = _overrides.set(MappingProxyType(merged))
    try:
        yield lab_snapshot()
    finally:
        _overrides.reset(token)


class LabExecutor(ThreadPoolExecutor):
    """Thread pool whose tasks run in a copy of the submitting context, overrides included."""

    def submit(self, fn, /, *args, **kwargs):
        return super().submit(copy_context().run, fn, *args, **kwargs)
