from .convert import ExportError, UnsupportedAggregation, export_model
from .datasets import DATASETS, DatasetUnavailable, GraphRecord, load_graph_dataset
from .export import (
    ExportManifest,
    degree_local_budgets,
    export_dataset,
    export_graph_records,
    export_node_records,
    khop_nodes,
)
from .sage import GraphClassifier, NodeClassifier, SumSAGEConv

__version__ = "0.1.0"
