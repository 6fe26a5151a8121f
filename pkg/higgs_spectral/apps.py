from django.apps import AppConfig


class HiggsSpectralConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'higgs_spectral'
