from django.urls import path
from . import views

urlpatterns = [
    path('results/', views.view_results, name='view_results'),
]
