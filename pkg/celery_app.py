"""Celery configuration for running analyses on a worker."""
from celery import Celery

from config import Config

# Redis serves as both broker and result backend
celery_app = Celery(
    'sturm_pencil_lab',
    broker=Config.REDIS_URL,
    backend=Config.REDIS_URL,
    include=['tasks.analysis_tasks']
)

celery_app.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    timezone='UTC',
    enable_utc=True,
    task_track_started=True,
    task_time_limit=Config.TASK_TIME_LIMIT,
    result_expires=3600,  # Results expire after 1 hour
)
