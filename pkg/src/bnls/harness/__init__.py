"""Configuration, persistence, run pipeline and command line."""
