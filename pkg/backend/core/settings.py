import os
import environ
from pathlib import Path

# Базова директорія проекту
BASE_DIR = Path(__file__).resolve().parent.parent

# Підключення змінних середовища
env = environ.Env(
    DEBUG=(bool, False),
    CELERY_TASK_ALWAYS_EAGER=(bool, True),
)

environ.Env.read_env(os.path.join(BASE_DIR.parent, '.env'))

# The lab has no web surface; the key only satisfies Django's startup checks
SECRET_KEY = env('SECRET_KEY', default='dislocations-lab-no-web-surface')
DEBUG = env.bool('DEBUG', default=False)
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',

    # Наші додатки
    'dislocations',
]

# No database: every artifact is a file written by the management commands
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Налаштування лабораторії
TOOL_NAME = 'dislocations'
TOOL_VERSION = '0.1.0'
DISLOCATIONS_OUTPUT_DIR = env('DISLOCATIONS_OUTPUT_DIR', default=str(BASE_DIR.parent / 'out'))
DISLOCATIONS_ACCEPTANCE = env.bool('DISLOCATIONS_ACCEPTANCE', default=False)

# Налаштування Celery
CELERY_BROKER_URL = env('CELERY_BROKER_URL', default='memory://')
CELERY_RESULT_BACKEND = env('CELERY_RESULT_BACKEND', default='cache+memory://')
CELERY_TASK_ALWAYS_EAGER = env.bool('CELERY_TASK_ALWAYS_EAGER', default=True)
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_ACCEPT_CONTENT = ['application/json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = TIME_ZONE

LOG_LEVEL = env('DJANGO_LOG_LEVEL', default='INFO')
LOG_FILE = env('DISLOCATIONS_LOG_FILE', default=None)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'dislocations': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
        'celery': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}

if LOG_FILE:
    LOGGING['handlers']['file'] = {
        'level': 'DEBUG',
        'class': 'logging.FileHandler',
        'filename': LOG_FILE,
        'formatter': 'verbose',
    }
    for _name in ('django', 'dislocations', 'celery'):
        LOGGING['loggers'][_name]['handlers'].append('file')
