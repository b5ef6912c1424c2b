"""File storage for datasets, checkpoints, graphs and reports."""
