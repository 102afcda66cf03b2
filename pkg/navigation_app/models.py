from django.core.exceptions import ValidationError
from django.db import models

from .simulator_core import FailureReason, Outcome


class Variant(models.TextChoices):
    COORDINATION = 'coordination', 'ORCA + coordination'
    BASELINE = 'orca', 'ORCA only'


# --- Sweep results ---
class SweepResult(models.Model):
    """
    One aggregated row of a sweep: success statistics of one pipeline variant
    on one map at one agent count.
    """
    label = models.CharField(max_length=100, help_text="Name of the sweep this row belongs to, eg., gaps-2025-10")
    map_name = models.CharField(max_length=100)
    variant = models.CharField(max_length=20, choices=Variant.choices)
    agents = models.PositiveIntegerField()
    scenarios = models.PositiveIntegerField(default=0)

    success_rate = models.FloatField()
    # Means over successful runs only; empty when nothing succeeded.
    mean_makespan_success = models.FloatField(null=True, blank=True)
    mean_flowtime_success = models.FloatField(null=True, blank=True)
    failures_by_reason = models.CharField(max_length=200, blank=True, help_text="eg., timeout:3;collision:1")

    created = models.DateTimeField(auto_now_add=True)

    class Meta:
        unique_together = ('label', 'map_name', 'variant', 'agents')
        ordering = ['label', 'map_name', 'variant', 'agents']

    def __str__(self):
        return f"{self.label}: {self.map_name} {self.variant} n={self.agents} -> {self.success_rate:.0%}"

    def clean(self):
        super().clean()
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValidationError(f"Success rate {self.success_rate} is outside [0, 1].")


# --- Single runs ---
class RunRecord(models.Model):
    """Outcome of one `run` command invocation."""
    map_name = models.CharField(max_length=100)
    scenario = models.CharField(max_length=255, blank=True)
    agents = models.PositiveIntegerField()
    variant = models.CharField(max_length=20, choices=Variant.choices, default=Variant.COORDINATION)

    outcome = models.CharField(max_length=10, choices=Outcome.choices)
    reason = models.CharField(max_length=12, choices=FailureReason.choices, blank=True)
    steps_used = models.PositiveIntegerField(default=0)
    makespan = models.FloatField(default=0.0)
    flowtime = models.FloatField(default=0.0)
    events = models.PositiveIntegerField(default=0, help_text="Number of coordination events logged.")

    created = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created']

    def __str__(self):
        status = self.outcome if not self.reason else f"{self.outcome} ({self.reason})"
        return f"{self.map_name} n={self.agents} {self.variant}: {status}"

    def clean(self):
        """A failure needs a reason; a success must not have one."""
        super().clean()
        if self.outcome == Outcome.FAILURE and not self.reason:
            raise ValidationError("A failed run must record its failure reason.")
        if self.outcome == Outcome.SUCCESS and self.reason:
            raise ValidationError(f"A successful run cannot have failure reason '{self.reason}'.")
