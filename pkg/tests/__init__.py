"""Test package marker for unittest discovery."""

