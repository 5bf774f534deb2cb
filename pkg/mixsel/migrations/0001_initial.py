# Generated by Django 5.2.7 on 2026-08-24 14:10

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                (
                    "study",
                    models.CharField(
                        choices=[
                            ("consistency", "Consistency"),
                            ("inconsistency", "Inconsistency"),
                            ("lil", "LIL trajectories"),
                            ("geometry", "Geometry figure"),
                            ("entropy", "Entropy study"),
                        ],
                        max_length=32,
                    ),
                ),
                ("master_seed", models.BigIntegerField()),
                ("output_dir", models.CharField(max_length=500)),
                ("manifest_sha256", models.CharField(blank=True, default="", max_length=64)),
                ("config", models.JSONField(default=dict)),
                ("row_count", models.PositiveIntegerField(default=0)),
                ("threads", models.PositiveIntegerField(default=1)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "ordering": ("-created_at",),
            },
        ),
    ]
