"""Replica-exchange (parallel tempering) hyperparameter search.

Thin Python face over the Rust engine. The vocabulary matches the `replex`
CLI: ``Config.parse``/``Config.load`` accept the same TOML the binary does,
and ``run`` executes any mode ("grid", "pt", "diffusion", "gibbs-check",
"calibrate-c"), optionally persisting the standard run directory.

>>> import replex
>>> cfg = replex.Config.parse(toml_text)
>>> result = replex.run(cfg, workers=2, out_dir="runs/demo")
>>> result["outcome"]["replicas"][0]["final_val_loss"]
"""

from replex._native import (
    EXCHANGE_STREAM_SALT,
    Config,
    beta_of,
    derive_seed,
    gibbs_density,
    read_checkpoint,
    run,
)

__all__ = [
    "EXCHANGE_STREAM_SALT",
    "Config",
    "beta_of",
    "derive_seed",
    "gibbs_density",
    "read_checkpoint",
    "run",
]
