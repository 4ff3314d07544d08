"""Config-driven experiment setup, output writers and the command line."""
