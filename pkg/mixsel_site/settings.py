"""
Mixsel Django settings

CHANGE LOG
----------
2026-09-02 • Settings banner lines go to stderr; stdout is reserved for command JSON.  # CHANGED:
           • Console log handler bound to sys.stderr for the same reason.             # CHANGED:

2026-08-21 • MIXSEL knobs moved into mixsel.config.get_mixsel_settings() (env-driven). # CHANGED:
           • Invalid env values fall back to defaults with a [settings_mixsel] note.   # CHANGED:

2026-08-14 • Initial project: one app (mixsel) + admin + rest_framework serializers.
- Rotating UTF-8 file log at BASE_DIR/logs/mixsel.log.
"""

from pathlib import Path
import os
import sys
from dotenv import load_dotenv

# ========= Base / Env =========
BASE_DIR = Path(__file__).resolve().parent.parent

ENV_CANDIDATES = [
    Path(os.path.expanduser('~/mixsel/.env')),  # per-user install
    BASE_DIR / '.env',                          # Local: project root
    BASE_DIR.parent / '.env',                   # Local: repo root (if settings/ nested)
]
for _env in ENV_CANDIDATES:
    if _env.exists():
        load_dotenv(_env)  # never overrides variables already in os.environ
        print(f"[settings_mixsel] Loaded env from: {_env}", file=sys.stderr)  # CHANGED:
        break
else:
    load_dotenv()  # fallback (no-op if missing)

# ========= Secret Key =========
# Only the admin uses it; a CLI-only install runs with the local fallback.
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY') or "mixsel-local-only-not-for-deployment"

DEBUG = os.getenv("DEBUG", "False") == "True"

ALLOWED_HOSTS = [
    "127.0.0.1",
    "localhost",
    "testserver",
] + (os.getenv("ADDITIONAL_HOSTS", "").split(",") if os.getenv("ADDITIONAL_HOSTS") else [])

# ========= Installed apps =========
INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "mixsel",
]

# ========= Middleware =========
MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
]

# ========= URL / Templates =========
ROOT_URLCONF = "mixsel_site.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

# ========= Database =========
# Run registry only (mixsel.models.ExperimentRun).
DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.getenv("MIXSEL_DB_PATH", str(BASE_DIR / "db.sqlite3")),
        "OPTIONS": {"timeout": 30},
    }
}

# ========= I18N =========
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True

STATIC_URL = "/static/"

# ========= Defaults =========
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# ========= Mixsel (env-driven knobs) =========
# CHANGED: single source of truth for thread count, output root, q cap, EM defaults.
try:  # CHANGED:
    from mixsel.config import get_mixsel_settings  # CHANGED:

    globals().update(get_mixsel_settings(base_dir=BASE_DIR))  # CHANGED:
except Exception as _mixsel_cfg_exc:  # CHANGED:
    # Safe fallback so manage.py still boots (migrations, admin).  # CHANGED:
    print(f"[settings_mixsel] mixsel config not applied: {_mixsel_cfg_exc}", file=sys.stderr)  # CHANGED:
    MIXSEL_THREADS = 1  # CHANGED:
    MIXSEL_OUTPUT_ROOT = BASE_DIR / "runs"  # CHANGED:
    MIXSEL_Q_CAP = 32  # CHANGED:
    MIXSEL_DEFAULT_STARTS = 20  # CHANGED:
    MIXSEL_GRID_TOLERANCE = 1e-9  # CHANGED:
    MIXSEL_LOG_LEVEL = "INFO"  # CHANGED:

# ========= Logging =========
LOG_DIR = Path(os.getenv("MIXSEL_LOG_DIR", str(BASE_DIR / 'logs')))
LOG_DIR.mkdir(parents=True, exist_ok=True)

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
        'file': {
            'level': 'INFO',
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOG_DIR / 'mixsel.log',
            'maxBytes': 1024*1024*15,
            'backupCount': 10,
            'formatter': 'verbose',
            'encoding': 'utf-8',
        },
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',  # CHANGED: keep stdout machine-parseable
            'formatter': 'simple',
        },
    },
    'loggers': {
        'mixsel': {
            'handlers': ['file', 'console'],
            'level': MIXSEL_LOG_LEVEL,
            'propagate': False,
        },
        'django': {
            'handlers': ['file'],
            'level': 'ERROR',
            'propagate': True,
        },
    },
}
