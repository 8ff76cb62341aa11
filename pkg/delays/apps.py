from django.apps import AppConfig


class DelaysConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'delays'
    verbose_name = 'Sojourn times and time-delays'
