# Load the Celery app with Django so the sweep tasks are registered
from .celery import app as celery_app

__all__ = ('celery_app',)
