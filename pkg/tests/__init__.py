"""Tests for d2d_underlay. Shared network builders live in ``network``."""
