"""Settings, logging, errors and run directories."""
