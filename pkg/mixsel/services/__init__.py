"""mixsel.services: the numerical core (no Django imports below this package except via mixsel.config)."""
