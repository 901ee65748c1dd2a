"""File-backed store for reports, tables and run status."""
import csv
import json
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List, Optional, Sequence

from utils.constants import CSV_FLOAT_FORMAT


def _format_cell(value: Any) -> str:
    if isinstance(value, float):
        return format(value, CSV_FLOAT_FORMAT)
    return str(value)


class ResultStore:
    """Writes the report files of one run into an output directory."""

    STATUS_FILE = 'status.json'

    def __init__(self, output_dir: str):
        """
        Initialize the store.

        Args:
            output_dir: Directory receiving every file of the run
        """
        self.output_dir = output_dir

    def ensure_output_dir(self):
        """Create the output directory if it doesn't exist."""
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def write_json(self, name: str, payload: Dict) -> str:
        """Write a JSON report with sorted keys so identical runs give identical bytes."""
        self.ensure_output_dir()
        filepath = self.path(name)
        with open(filepath, 'w') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write('\n')
        return filepath

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """Write a CSV table; floats carry 17 significant digits."""
        self.ensure_output_dir()
        filepath = self.path(name)
        with open(filepath, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_cell(value) for value in row])
        return filepath

    def read_json(self, name: str) -> Optional[Dict]:
        filepath = self.path(name)
        if not os.path.exists(filepath):
            return None
        with open(filepath, 'r') as f:
            return json.load(f)

    def read_csv(self, name: str) -> List[List[str]]:
        with open(self.path(name), 'r', newline='') as f:
            return list(csv.reader(f))

    def save_status(self, status: str, command: Optional[str] = None,
                    data: Optional[Dict] = None, error: Optional[Dict] = None):
        """Record the run status ('pending', 'processing', 'completed', 'failed')."""
        self.ensure_output_dir()
        result = {
            'status': status,
            'command': command,
            'updated_at': datetime.now().isoformat(),
            'data': data,
            'error': error
        }
        with open(self.path(self.STATUS_FILE), 'w') as f:
            json.dump(result, f)

    def get_status(self) -> Optional[Dict]:
        """Get the run status, or None if the run never started."""
        return self.read_json(self.STATUS_FILE)
