"""Probabilistic active meta-learning over simulated robot dynamics.

The heavy lifting lives in the compiled extension; this package re-exports
its surface.
"""

from paml._core import (  # noqa: F401
    MetaModel,
    control_signal,
    lhs_sample,
    rbf_gram,
    render_cartpole,
    run_active_loop,
    run_oracle,
    simulate_task,
    uniform_sample,
    utility,
)

__all__ = [
    "MetaModel",
    "control_signal",
    "lhs_sample",
    "rbf_gram",
    "render_cartpole",
    "run_active_loop",
    "run_oracle",
    "simulate_task",
    "uniform_sample",
    "utility",
]
