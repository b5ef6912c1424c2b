"""Presentation layer."""