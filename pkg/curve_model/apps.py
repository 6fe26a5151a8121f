from django.apps import AppConfig


class CurveModelConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'curve_model'
