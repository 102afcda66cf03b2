from django.core.exceptions import ValidationError
from django.test import TestCase
from django.urls import reverse

from navigation_app.models import RunRecord, SweepResult, Variant
from navigation_app.simulator_core import FailureReason, Outcome


def sweep_row(label="gaps", map_name="gaps-1", variant=Variant.COORDINATION, agents=5, rate=1.0, **kwargs):
    return SweepResult.objects.create(
        label=label, map_name=map_name, variant=variant, agents=agents, success_rate=rate, **kwargs,
    )


class ResultsViewTests(TestCase):

    def test_empty_state(self):
        response = self.client.get(reverse('view_results'))
        self.assertEqual(response.status_code, 200)
        self.assertContains(response, "No sweep results stored yet")

    def test_table_per_variant(self):
        sweep_row(map_name="gaps-1", agents=5, rate=1.0)
        sweep_row(map_name="gaps-2", agents=5, rate=0.5)
        sweep_row(map_name="gaps-1", variant=Variant.BASELINE, agents=10, rate=0.25)
        response = self.client.get(reverse('view_results'))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.context['maps'], ["gaps-1", "gaps-2"])
        self.assertEqual([t['variant'] for t in response.context['tables']], ["ORCA + coordination", "ORCA only"])
        first_row = response.context['tables'][0]['rows'][0]
        self.assertEqual(first_row['agents'], 5)
        self.assertEqual([cell.success_rate for cell in first_row['cells']], [1.0, 0.5])
        self.assertContains(response, "gaps-2")

    def test_map_filter(self):
        sweep_row(map_name="gaps-1")
        sweep_row(map_name="rooms-64-15")
        response = self.client.get(reverse('view_results'), {'map': 'rooms-64-15'})
        self.assertEqual(response.context['maps'], ["rooms-64-15"])
        self.assertEqual(response.context['all_maps'], ["gaps-1", "rooms-64-15"])

    def test_label_selection(self):
        sweep_row(label="old", map_name="gaps-1")
        sweep_row(label="new", map_name="gaps-4")
        response = self.client.get(reverse('view_results'), {'label': 'old'})
        self.assertEqual(response.context['selected_label'], "old")
        self.assertEqual(response.context['maps'], ["gaps-1"])


class ModelValidationTests(TestCase):

    def test_success_rate_range(self):
        row = SweepResult(label="x", map_name="m", variant=Variant.BASELINE, agents=5, success_rate=1.5)
        with self.assertRaises(ValidationError):
            row.full_clean()

    def test_failure_needs_reason(self):
        record = RunRecord(map_name="m", agents=2, outcome=Outcome.FAILURE)
        with self.assertRaises(ValidationError):
            record.full_clean()
        record.reason = FailureReason.COLLISION
        record.full_clean()

    def test_success_has_no_reason(self):
        record = RunRecord(map_name="m", agents=2, outcome=Outcome.SUCCESS, reason=FailureReason.TIMEOUT)
        with self.assertRaises(ValidationError):
            record.full_clean()

    def test_str(self):
        row = sweep_row(rate=0.25)
        self.assertEqual(str(row), "gaps: gaps-1 coordination n=5 -> 25%")


class AdminTests(TestCase):

    def test_changelists_render(self):
        from django.contrib.auth.models import User

        self.client.force_login(User.objects.create_superuser("admin", "admin@example.com", "pw"))
        sweep_row()
        for name in ('admin:navigation_app_sweepresult_changelist', 'admin:navigation_app_runrecord_changelist'):
            self.assertEqual(self.client.get(reverse(name)).status_code, 200)
