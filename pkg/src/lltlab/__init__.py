"""Local limit theorem verification lab."""
