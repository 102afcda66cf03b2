from django.contrib import admin

from .models import RunRecord, SweepResult


@admin.register(SweepResult)
class SweepResultAdmin(admin.ModelAdmin):
    list_display = ('label', 'map_name', 'variant', 'agents', 'success_rate', 'failures_by_reason')
    list_filter = ('label', 'map_name', 'variant')


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = ('created', 'map_name', 'agents', 'variant', 'outcome', 'reason', 'steps_used')
    list_filter = ('outcome', 'variant')
