"""Test suite for chainverifier."""
