"""
Experiments and initial data
============================

The harness builds bump initial data, checks its topology and runs
configured experiments that write diagnostics and checkpoints.
"""

import tempfile

import numpy as np

from hflow.harness import (
    ExperimentConfig,
    collapse_to_sphere,
    hopf_linking_number,
    run_experiment,
    sphere_map_degree,
)


def collapse(pts):
    y0, w = collapse_to_sphere(pts, 1.0)
    return np.concatenate([y0[None], w])


# the collapse map has degree one and two Hopf fibres link once
print("degree of the collapse map:", round(sphere_map_degree(collapse, 14), 4))
print("linking of two Hopf fibres:", round(hopf_linking_number(np.array([1.0, 0, 0]), np.array([0, 1.0, 0])), 4))

cfg = ExperimentConfig(res=8, r=2.5, amplitude=0.8, t_end=0.5, checkpoint_cadence=5)
with tempfile.TemporaryDirectory() as tmp:
    rep = run_experiment(cfg, tmp)
    print("outcome:", rep.outcome, " steps:", rep.summary["steps"], " D0:", round(rep.summary["D0"], 4))
