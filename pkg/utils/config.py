"""Flat dotted configuration files layered under HfArgumentParser argument groups.

A config file holds ``section.key = value`` lines (``#`` starts a comment). Every
argument dataclass names its section through a ``config_section`` class variable.
File values become parser defaults, so explicit command-line flags still win.
"""
import dataclasses
import logging
import os
import sys
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from transformers import HfArgumentParser

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "COMPACTON_OUTPUT_DIR"

# every section any command understands; keys of other commands are skipped, not rejected
KNOWN_SECTIONS: Dict[str, type] = {}


def register_section(dtype: type) -> type:
    section = getattr(dtype, "config_section", None)
    if not section:
        raise ValueError(f"{dtype.__name__} does not declare a config_section")
    KNOWN_SECTIONS[section] = dtype
    return dtype


def _field_names(dtype: type) -> List[str]:
    return [f.name for f in dataclasses.fields(dtype) if f.init]


def parse_config_text(text: str, dataclass_types: Sequence[type]) -> Dict[str, str]:
    """Map field name -> raw string for the sections of `dataclass_types`."""
    wanted = {dtype.config_section for dtype in dataclass_types}
    values: Dict[str, str] = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'section.key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise ValueError(f"config line {lineno}: key {key!r} has no section prefix")
        section, name = key.split(".", 1)
        if section not in KNOWN_SECTIONS:
            raise ValueError(f"config line {lineno}: unknown section {section!r}")
        if name not in _field_names(KNOWN_SECTIONS[section]):
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if section not in wanted:
            logger.debug(f"config key {key} is not used by this command")
            continue
        values[name] = value
    return values


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(*instances) -> str:
    lines = []
    for instance in instances:
        section = type(instance).config_section
        for name in _field_names(type(instance)):
            value = getattr(instance, name)
            if value is None:
                continue
            lines.append(f"{section}.{name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def _pop_config_path(args: List[str]) -> Tuple[Optional[str], List[str]]:
    remaining, path = [], None
    iterator = iter(args)
    for arg in iterator:
        if arg == "--config":
            path = next(iterator, None)
            if path is None:
                raise ValueError("--config needs a path")
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
        else:
            remaining.append(arg)
    return path, remaining


class ConfigArgumentParser(HfArgumentParser):
    """HfArgumentParser that also reads ``--config`` files and the output-dir env var."""

    def parse_with_config(self, args: Optional[Iterable[str]] = None):
        args = list(sys.argv[1:] if args is None else args)
        path, args = _pop_config_path(args)
        if path is not None:
            try:
                with open(path) as handle:
                    text = handle.read()
            except OSError as err:
                raise ValueError(f"cannot read config file {path!r}: {err}") from err
            self.set_defaults(**parse_config_text(text, self.dataclass_types))
            logger.info(f"loaded config {path}")
        override = os.environ.get(OUTPUT_DIR_ENV)
        if override and any("out_dir" in _field_names(dtype) for dtype in self.dataclass_types):
            self.set_defaults(out_dir=override)
        return self.parse_args_into_dataclasses(args=args)

    def parse_config_string(self, text: str):
        self.set_defaults(**parse_config_text(text, self.dataclass_types))
        return self.parse_args_into_dataclasses(args=[])
