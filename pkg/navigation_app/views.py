import logging

from django.shortcuts import render

from .models import SweepResult, Variant

logger = logging.getLogger(__name__)


def view_results(request):
    """Success rates of one sweep as an agents x map table per variant."""
    labels = list(SweepResult.objects.order_by('-created').values_list('label', flat=True).distinct())
    labels = list(dict.fromkeys(labels))
    selected_label = request.GET.get('label') or (labels[0] if labels else None)
    selected_map = request.GET.get('map')

    results = SweepResult.objects.filter(label=selected_label)
    all_maps = sorted(set(results.values_list('map_name', flat=True)))
    if selected_map:
        results = results.filter(map_name=selected_map)
    logger.debug("Results page: label=%s map=%s rows=%d", selected_label, selected_map, results.count())

    maps = sorted({r.map_name for r in results})
    tables = []
    for variant in Variant:
        cells = {(r.agents, r.map_name): r for r in results if r.variant == variant}
        if not cells:
            continue
        rows = []
        for agents in sorted({agents for agents, _ in cells}):
            rows.append({'agents': agents, 'cells': [cells.get((agents, name)) for name in maps]})
        tables.append({'variant': variant.label, 'rows': rows})

    context = {
        'labels': labels,
        'selected_label': selected_label,
        'all_maps': all_maps,
        'selected_map': selected_map,
        'maps': maps,
        'tables': tables,
    }
    return render(request, 'navigation/results.html', context)
