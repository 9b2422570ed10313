"""Kinetic mean-field Langevin particle toolkit.

Thin wrappers over the native core. Configuration overrides use the same keys
as the command-line tool and configuration files, e.g. ``{"N": 256,
"field.gamma": 0.05}``.
"""

from ._core import (
    BlowUpError,
    ConfigError,
    InadmissibleError,
    KmfError,
    config_text,
    contraction_rate,
    eta0,
    experiment_names,
    run,
    set_threads,
    simulate,
    thread_count,
    w2,
)

__all__ = [
    "BlowUpError",
    "ConfigError",
    "InadmissibleError",
    "KmfError",
    "config_text",
    "contraction_rate",
    "eta0",
    "experiment_names",
    "run",
    "set_threads",
    "simulate",
    "thread_count",
    "w2",
]
__version__ = "0.1.0"
