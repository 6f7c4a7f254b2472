from .core import (Forest, GrowConfig, grow, impute_at_node, logrank_components,
                   logrank_statistic)
from .imputation import finalize_imputation
from .io import SCHEMA_VERSION, deserialize, load, save, serialize

__all__ = ["Forest", "GrowConfig", "SCHEMA_VERSION", "deserialize", "finalize_imputation",
           "grow", "impute_at_node", "load", "logrank_components", "logrank_statistic",
           "save", "serialize"]
