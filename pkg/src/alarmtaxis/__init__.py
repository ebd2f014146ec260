"""Alarm-taxis predator-prey simulator."""
