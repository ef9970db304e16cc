import math

import numpy as np


def random_motion(rng):
    """Rotation angle, rotation matrix and translation of a random rigid motion."""
    t = rng.uniform(0, 2 * math.pi)
    Q = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    return t, Q, rng.uniform(-10, 10, size=2)


def noisy_arc(rng, n, circle=(0.0, 0.0, 1.0), arc=math.pi, sigma=0.05, start=None):
    a, b, R = circle
    s = rng.uniform(0, 2 * math.pi) if start is None else start
    phi = s + arc * np.sort(rng.uniform(0, 1, n))
    pts = np.column_stack([a + R * np.cos(phi), b + R * np.sin(phi)])
    return pts + sigma * rng.standard_normal((n, 2))


# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE = []


def record(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append((criterion, passed, line))
    print(line)
    assert passed, line
