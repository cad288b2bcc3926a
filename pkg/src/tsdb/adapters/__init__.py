"""External applications driven by the evaluation harness."""
