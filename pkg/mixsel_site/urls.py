"""
CHANGE LOG
----------
2026-08-14
- ADD: Admin only. The run registry (mixsel.ExperimentRun) is browsed there; there is no web API.
"""

from django.contrib import admin
from django.urls import path

urlpatterns = [
    path("admin/", admin.site.urls),
]
