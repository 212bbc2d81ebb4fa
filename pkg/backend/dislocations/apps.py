from django.apps import AppConfig


class DislocationsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dislocations'
    verbose_name = 'Strongly nonlocal dislocation laboratory'
