"""Training data generation, dataset files and the approximate policy."""
