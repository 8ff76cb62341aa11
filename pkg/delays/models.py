"""
Database models for the delays app.

The lab keeps no scientific state in the database. RunRecord is bookkeeping
only: one row per `lab` invocation, written best-effort.
"""
from django.db import models
from django.utils import timezone


class RunRecord(models.Model):
    """One `lab` run: the subcommand, its resolved configuration and the headline numbers."""

    command = models.CharField(max_length=40)
    config = models.JSONField()
    summary = models.JSONField(default=dict)
    exit_status = models.IntegerField(default=0)
    created_at = models.DateTimeField(default=timezone.now)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['-created_at'], name='delays_run_created_idx'),
            models.Index(fields=['command'], name='delays_run_command_idx'),
        ]

    def __str__(self):
        return f"{self.command} ({self.exit_status}) - {self.created_at}"
