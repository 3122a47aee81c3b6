"""Parametric NLPs: transcription of the MPC problem, interior-point solver and KKT sensitivities."""
