"""Celery task running one analysis command in the background."""
import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from celery_app import celery_app
import cli


@celery_app.task(bind=True, name='tasks.run_analysis')
def run_analysis(self, command, config_path, output_dir, seed=None, cells=None):
    """
    Background task running a CLI command on a worker.

    Args:
        self: Celery task instance
        command: solve, transform, oscillate, chebyshev, regularity or all
        config_path: Problem file path as seen by the worker
        output_dir: Directory for the report files
        seed: Overrides analysis.seed
        cells: Overrides mesh.cells

    Returns:
        Dict with the exit status and output directory
    """
    try:
        if not self.request.called_directly:
            self.update_state(state='PROGRESS', meta={'status': f'Running {command}...'})

        exit_status = cli.run(command, config_path, output_dir, seed=seed, cells=cells)

        return {
            'status': 'completed',
            'data': {'exit_status': exit_status, 'output_dir': output_dir}
        }

    except Exception as e:
        return {
            'status': 'failed',
            'error': str(e)
        }
