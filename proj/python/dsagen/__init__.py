"""Security-boundary dataset generation for power systems."""

from ._dsagen import (
    Dataset,
    DsagenError,
    Network,
    RunConfig,
    Tree,
    __version__,
    benchmark,
    f1,
    generate,
    gini,
    lhc_sample,
    load_config,
    load_network,
    polytope,
    read_dataset,
    train_eval,
    train_tree,
)

__all__ = [
    "Dataset",
    "DsagenError",
    "Network",
    "RunConfig",
    "Tree",
    "__version__",
    "benchmark",
    "f1",
    "generate",
    "gini",
    "lhc_sample",
    "load_config",
    "load_network",
    "polytope",
    "read_dataset",
    "train_eval",
    "train_tree",
]
