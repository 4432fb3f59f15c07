"""Mileage-responsive wind power smoothing."""
