"""Service layer for stefan_control."""
