from django.apps import AppConfig


class FiberDiracConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'fiber_dirac'
