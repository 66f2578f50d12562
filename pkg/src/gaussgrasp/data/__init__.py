from .augment import AugmentError, augment
from .cornell import parse_cornell, rectangle_from_vertices
from .dataset import GraspDataset, load_dataset, load_records
from .inputs import InputError, assemble_input
from .jacquard import parse_jacquard
from .records import (AugmentSpec, Channels, DatasetError, DatasetWarning, InputSpec, ParseSummary,
                      SampleRecord, Source)
from .splits import SplitError, make_kfold_splits, make_splits, read_split_file, write_split_file

__all__ = [
    "AugmentError", "AugmentSpec", "Channels", "DatasetError", "DatasetWarning", "GraspDataset",
    "InputError", "InputSpec", "ParseSummary", "SampleRecord", "Source", "SplitError", "assemble_input",
    "augment", "load_dataset", "load_records", "make_kfold_splits", "make_splits", "parse_cornell",
    "parse_jacquard", "read_split_file", "rectangle_from_vertices", "write_split_file",
]
