from django.apps import AppConfig


class MixselConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "mixsel"
    verbose_name = "Mixture order selection"
