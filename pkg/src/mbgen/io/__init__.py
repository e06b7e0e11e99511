from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, parse_config_text
from .graphfile import GraphFileError, load_graph_dataset, write_graph_dataset
from .mgf import MgfError, parse_mgf, write_mgf

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "GraphFileError",
    "MgfError",
    "RunConfig",
    "load_checkpoint",
    "load_config",
    "load_graph_dataset",
    "parse_config_text",
    "parse_mgf",
    "save_checkpoint",
    "write_graph_dataset",
    "write_mgf",
]
