"""Plant models, their parameters and the built-in problem registry."""
