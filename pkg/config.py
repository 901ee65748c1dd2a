import os
from dotenv import load_dotenv

from utils.constants import DEFAULT_CELLS

load_dotenv()

class Config:
    LOG_LEVEL = os.environ.get('PENCIL_LOG_LEVEL') or 'INFO'
    RESULTS_DIR = os.environ.get('PENCIL_RESULTS_DIR') or 'results'
    DEFAULT_CELLS = int(os.environ.get('PENCIL_DEFAULT_CELLS') or DEFAULT_CELLS)
    REDIS_URL = os.environ.get('REDIS_URL') or 'redis://localhost:6379/0'
    TASK_TIME_LIMIT = int(os.environ.get('PENCIL_TASK_TIME_LIMIT') or 1800)  # 30 minutes
