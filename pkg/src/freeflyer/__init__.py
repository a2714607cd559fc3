"""Microgravity free-flyer simulation toolkit for rendezvous and proximity operations."""

__version__ = "0.1.0"
