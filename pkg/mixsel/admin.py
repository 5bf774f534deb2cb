from django.contrib import admin

from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("study", "master_seed", "row_count", "threads", "created_at")
    list_filter = ("study",)
    search_fields = ("output_dir", "manifest_sha256")
    readonly_fields = ("manifest_sha256", "config", "created_at")
