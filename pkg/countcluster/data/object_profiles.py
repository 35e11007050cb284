"""
Simulator profiles for the benchmark's object categories.

The blob simulator has no semantics, so an object category only changes
how the initial scene is drawn: typical blob size, how uneven the blob
amplitudes are, and how much noise the trajectory adds.
"""

from typing import Optional

# Profiles by object category
# width: typical blob width in patches (initial log-width is drawn around ln(width))
# amplitude_std: spread of initial log-amplitudes
# noise_factor: multiplier on the run's noise0
OBJECT_PROFILES: dict[str, dict] = {
    # Small, compact objects
    "eggs": {"width": 1.6, "amplitude_std": 0.4, "noise_factor": 0.8},
    "lemons": {"width": 1.8, "amplitude_std": 0.4, "noise_factor": 0.8},
    "mice": {"width": 1.6, "amplitude_std": 0.6, "noise_factor": 1.2},
    "onions": {"width": 1.8, "amplitude_std": 0.4, "noise_factor": 0.8},
    "donuts": {"width": 1.9, "amplitude_std": 0.5, "noise_factor": 1.0},
    "apples": {"width": 2.0, "amplitude_std": 0.4, "noise_factor": 0.8},
    "oranges": {"width": 2.0, "amplitude_std": 0.4, "noise_factor": 0.8},
    "tomatoes": {"width": 1.9, "amplitude_std": 0.45, "noise_factor": 0.9},

    # Medium objects
    "birds": {"width": 2.0, "amplitude_std": 0.6, "noise_factor": 1.2},
    "frogs": {"width": 2.0, "amplitude_std": 0.5, "noise_factor": 1.0},
    "turtles": {"width": 2.2, "amplitude_std": 0.5, "noise_factor": 1.0},
    "clocks": {"width": 2.2, "amplitude_std": 0.3, "noise_factor": 0.7},
    "cats": {"width": 2.4, "amplitude_std": 0.55, "noise_factor": 1.1},
    "dogs": {"width": 2.5, "amplitude_std": 0.55, "noise_factor": 1.1},
    "monkeys": {"width": 2.4, "amplitude_std": 0.6, "noise_factor": 1.2},

    # Large objects
    "cars": {"width": 2.8, "amplitude_std": 0.4, "noise_factor": 0.9},
    "bears": {"width": 3.0, "amplitude_std": 0.5, "noise_factor": 1.0},
    "horses": {"width": 3.0, "amplitude_std": 0.5, "noise_factor": 1.0},
    "elephants": {"width": 3.4, "amplitude_std": 0.5, "noise_factor": 1.0},
}

# Used when no object category is given
DEFAULT_PROFILE = {
    "width": 2.0,
    "amplitude_std": 0.5,
    "noise_factor": 1.0,
}


def get_object_profile(name: Optional[str]) -> dict:
    """
    Get the simulator profile for an object category.
    Unknown or missing names fall back to the default profile.
    """
    if not name:
        return {"object": None, **DEFAULT_PROFILE}
    key = name.lower()
    if key in OBJECT_PROFILES:
        return {"object": key, **OBJECT_PROFILES[key]}
    return {"object": key, **DEFAULT_PROFILE}


def list_objects() -> list[str]:
    """All known object categories, in table order."""
    return list(OBJECT_PROFILES)


def profile_for_seed(objects: list[str], seed: int) -> dict:
    """Profile assigned to a seed when a benchmark cycles over objects."""
    if not objects:
        return get_object_profile(None)
    return get_object_profile(objects[seed % len(objects)])
