"""
Actuator Placements Module

Default Dirac actuator positions for M in {3, 4, 9, 12}. The M = 4 and M = 9
layouts are regular grids; M = 3 and M = 12 are reconstructions of the
benchmark figure and can always be replaced by explicit coordinates.
"""

import numpy as np

from errors import InvalidArgumentError

SUPPORTED_COUNTS = (3, 4, 9, 12)


def _grid(xs, ys):
    return [(x, y) for y in ys for x in xs]


def default_placement(m):
    """
    Default actuator coordinates

    Args:
        m: Number of actuators, one of 3, 4, 9, 12

    Returns:
        list: m (x1, x2) tuples strictly inside the unit square
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m not in SUPPORTED_COUNTS:
        raise InvalidArgumentError(
            f"no default placement for {m!r} actuators (supported: {SUPPORTED_COUNTS}); "
            "give explicit actuator_points instead"
        )
    thirds = (1.0 / 6.0, 0.5, 5.0 / 6.0)
    if m == 3:
        return [(0.25, 0.25), (0.75, 0.25), (0.5, 0.75)]
    if m == 4:
        return _grid((0.25, 0.75), (0.25, 0.75))
    if m == 9:
        return _grid(thirds, thirds)
    return _grid((0.125, 0.375, 0.625, 0.875), thirds)
