"""Config parsing, artifact writers and the ``relgan`` command line."""

from .artifacts import (
    RunManifest,
    ScatterLayer,
    csv_column,
    emit_csv,
    emit_svg_scatter,
    format_value,
    read_csv,
    symmetric_bounds,
)
from .config import DiracConfig, config_from_mapping, parse_config, serialize_config, with_overrides
