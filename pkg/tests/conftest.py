"""Shared test configuration.

Hypothesis runs derandomized with no deadline: the sandbox is a single
slow core and the property tests must behave identically run to run.
"""

import hypothesis

hypothesis.settings.register_profile(
    "edgebandit", deadline=None, derandomize=True, max_examples=100
)
hypothesis.settings.load_profile("edgebandit")
