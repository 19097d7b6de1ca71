"""Scenario files: strict sectioned ``key = value`` text to and from :class:`Scenario`.

Format
------
::

    [domain]
    nx = 64
    ny = 64
    [physics]
    kappa = 0.1
    [time]
    dt = 1e-3
    T = 1.0

Sections and keys are case-sensitive.  ``#`` and ``;`` start comments.
Keys absent from the file take the :class:`Scenario` default; the required
ones are listed in :data:`REQUIRED`.  Unknown sections or keys, duplicates,
unparsable values and invalid parameters raise :class:`LoadError` naming
``section.key`` and the line.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import fields
from pathlib import Path

from mvsim.errors import ConfigurationError, LoadError
from mvsim.scenario import Scenario

SECTIONS: dict[str, tuple[str, ...]] = {
    "domain": ("Lx", "Ly", "nx", "ny"),
    "physics": ("kappa", "nu", "density"),
    "time": ("dt", "T", "snapshot_stride"),
    "initial": ("v0", "v0_amp", "F0", "F0_amp", "F0_component", "M0", "M0_x", "M0_y", "M0_z",
                "M0_amp", "M0_tilt", "snapshot"),
    "external": ("hext", "hext_amp", "hext_x", "hext_y", "hext_z", "hext_a", "hext_omega",
                 "hext_k"),
    "tolerances": ("tol_poisson", "tol_div", "eps_renorm", "cfl_safety", "C_e"),
    "run": ("seed", "freeze_velocity", "llg_scheme", "poisson", "diffusion"),
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "domain": ("nx", "ny"),
    "physics": ("kappa",),
    "time": ("dt", "T"),
}

SECTION_OF = {key: sec for sec, keys in SECTIONS.items() for key in keys}
_TYPES = {f.name: f.type for f in fields(Scenario)}
_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}

_SECTION_RE = re.compile(r"^\s*\[([^\]]*)\]")
_KEY_RE = re.compile(r"^([^\s=:#;\[][^=:]*?)\s*[=:]")

assert set(SECTION_OF) == set(_TYPES), "every Scenario field belongs to exactly one section"


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """``(section, key) -> line`` and ``(section, None) -> header line``, first occurrence."""
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip()), lineno)
    return index


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    if kind == "str":
        return raw
    if kind == "bool":
        try:
            return _BOOL[raw.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {raw!r}") from None
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    raise TypeError(f"unsupported field type {kind!r}")  # pragma: no cover


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_scenario(text: str, base_dir: str | Path | None = None) -> Scenario:
    """Parse scenario text into a validated :class:`Scenario`.

    Parameters
    ----------
    text
        Sectioned key-value text.
    base_dir
        Directory that a relative ``[initial] snapshot`` path is resolved against.

    Raises
    ------
    LoadError
        Syntax error, unknown or missing key, unparsable value, or a value the
        scenario rejects.  ``key`` is ``"section.key"`` and ``line`` the
        1-based line when the key appears in the file.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="\0",
                                       comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"),
                                       empty_lines_in_values=False)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise LoadError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise LoadError("duplicate section", exc.section, exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise LoadError("key outside any section", None, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise LoadError("malformed line", None, lineno) from None

    index = _line_index(text)
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise LoadError(f"unknown section; known: {sorted(SECTIONS)}", section,
                            index.get((section, None)))
        for key, raw in parser.items(section):
            where = f"{section}.{key}"
            line = index.get((section, key))
            if key not in SECTIONS[section]:
                hint = f" (belongs in [{SECTION_OF[key]}])" if key in SECTION_OF else ""
                raise LoadError(f"unknown key{hint}", where, line)
            if "\n" in raw:
                raise LoadError("value spans several lines", where, line)
            try:
                values[key] = _convert(key, raw.strip())
            except ValueError as exc:
                raise LoadError(f"cannot parse {raw!r} as {_TYPES[key]}: {exc}", where,
                                line) from None
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in values:
                raise LoadError("missing required key", f"{section}.{key}",
                                index.get((section, None)))
    if values.get("snapshot") and base_dir is not None:
        path = Path(values["snapshot"])
        if not path.is_absolute():
            values["snapshot"] = str(Path(base_dir) / path)
    try:
        return Scenario(**values)
    except ConfigurationError as exc:
        key = exc.field
        if key is None:
            raise LoadError(str(exc)) from None
        section = SECTION_OF[key]
        raise LoadError(str(exc), f"{section}.{key}", index.get((section, key))) from None


def load_scenario(path: str | Path) -> Scenario:
    """Read and parse a scenario file; relative snapshot paths resolve next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read scenario file {path}: {exc.strerror}") from None
    return parse_scenario(text, base_dir=path.parent)


def serialize_scenario(scenario: Scenario) -> str:
    """Every field, grouped by section; floats use ``repr`` so parsing it back is exact."""
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        out.extend(f"{key} = {_format(getattr(scenario, key))}" for key in keys)
        out.append("")
    return "\n".join(out)


def write_scenario(path: str | Path, scenario: Scenario) -> Path:
    path = Path(path)
    path.write_text(serialize_scenario(scenario))
    return path
