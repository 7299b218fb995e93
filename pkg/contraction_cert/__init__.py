"""Certificados de contractividad inducidos por normas y verificación por simulación."""

__version__ = "0.1.0"
