"""Command-line front end: configuration, validation, diagnostics and the pipeline stages."""
