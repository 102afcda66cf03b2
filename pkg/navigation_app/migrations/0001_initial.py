# Generated by Django 5.2.6 on 2025-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('map_name', models.CharField(max_length=100)),
                ('scenario', models.CharField(blank=True, max_length=255)),
                ('agents', models.PositiveIntegerField()),
                ('variant', models.CharField(choices=[('coordination', 'ORCA + coordination'), ('orca', 'ORCA only')], default='coordination', max_length=20)),
                ('outcome', models.CharField(choices=[('success', 'Success'), ('failure', 'Failure')], max_length=10)),
                ('reason', models.CharField(blank=True, choices=[('timeout', 'Timeout'), ('collision', 'Collision'), ('no_path', 'No path'), ('internal', 'Internal')], max_length=12)),
                ('steps_used', models.PositiveIntegerField(default=0)),
                ('makespan', models.FloatField(default=0.0)),
                ('flowtime', models.FloatField(default=0.0)),
                ('events', models.PositiveIntegerField(default=0, help_text='Number of coordination events logged.')),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created'],
            },
        ),
        migrations.CreateModel(
            name='SweepResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(help_text='Name of the sweep this row belongs to, eg., gaps-2025-10', max_length=100)),
                ('map_name', models.CharField(max_length=100)),
                ('variant', models.CharField(choices=[('coordination', 'ORCA + coordination'), ('orca', 'ORCA only')], max_length=20)),
                ('agents', models.PositiveIntegerField()),
                ('scenarios', models.PositiveIntegerField(default=0)),
                ('success_rate', models.FloatField()),
                ('mean_makespan_success', models.FloatField(blank=True, null=True)),
                ('mean_flowtime_success', models.FloatField(blank=True, null=True)),
                ('failures_by_reason', models.CharField(blank=True, help_text='eg., timeout:3;collision:1', max_length=200)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['label', 'map_name', 'variant', 'agents'],
                'unique_together': {('label', 'map_name', 'variant', 'agents')},
            },
        ),
    ]
