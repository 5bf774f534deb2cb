from django.db import models


class ExperimentRun(models.Model):
    """One completed `mixsel exp` run; the output directory holds the files listed in its manifest."""

    STUDY_CHOICES = [
        ("consistency", "Consistency"),
        ("inconsistency", "Inconsistency"),
        ("lil", "LIL trajectories"),
        ("geometry", "Geometry figure"),
        ("entropy", "Entropy study"),
    ]

    study = models.CharField(max_length=32, choices=STUDY_CHOICES)
    master_seed = models.BigIntegerField()
    output_dir = models.CharField(max_length=500)
    manifest_sha256 = models.CharField(max_length=64, blank=True, default="")
    config = models.JSONField(default=dict)
    row_count = models.PositiveIntegerField(default=0)
    threads = models.PositiveIntegerField(default=1)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ("-created_at",)

    def __str__(self):
        return f"{self.study} seed={self.master_seed} at {self.created_at:%Y-%m-%d %H:%M}"
