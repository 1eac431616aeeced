"""Experiment harness: configuration, Monte-Carlo orchestration, CSV/SVG output and CLI."""
