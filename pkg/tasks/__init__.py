"""Background tasks for the pencil analyses."""
