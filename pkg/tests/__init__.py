"""Test suites for occgen; run with python3 -m unittest discover -s tests."""
