from django.apps import AppConfig


class MatchFmConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'match_fm'
