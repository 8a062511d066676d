"""Shared helpers for the experiment scripts."""
import json

import numpy as np

from phi43.io import OutputDir


def cosine_data(g):
    x = g.points
    f = np.cos(2 * np.pi * x[0])
    if g.d > 1:
        f = f + 0.5 * np.sin(2 * np.pi * sum(x[1:]))
    return f


def save(out, name, payload):
    print(json.dumps(payload, indent=2, default=float))
    if out:
        od = OutputDir.create(out)
        od.write_json(name, payload)
