from django.apps import AppConfig


class NahmConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'nahm'
