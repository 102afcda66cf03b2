from django.apps import AppConfig


class NavigationAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'navigation_app'
    verbose_name = 'Multi-agent navigation'
