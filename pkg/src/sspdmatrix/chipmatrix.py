"""The detector matrix: chip-layout files, addressing, prescreening and surveys.

A chip configuration is one JSON document::

    {
      "format": "sspdmatrix-chip/1",
      "grid": {"rows": 12, "columns": 20},
      "designs":  {id: {width_nm, length_um, film_thickness_nm, absorption_db_per_um,
                        sheet_inductance_ph_per_sq, tc_k, jc0_a_per_m2,
                        efficiency: {steepness, table: [[T_K, plateau, inflection], ...]},
                        dark_counts: {ref_rate_hz, ref_bias, ref_temperature_k,
                                      bias_slope, temperature_slope_per_k}}},
      "couplers": {id: {center_wavelength_nm, bandwidth_fwhm_nm, peak_loss_db}},
      "rings":    {id: {circumference_mm, group_index, t_through, t_drop, alpha_per_m, topology}},
      "splitter": {nominal_ratio, imbalance_db},
      "reference_couplers": [{id, coupler, transmission_db}, ...],
      "cells": [{row, col, design, coupler, ring, measured: {...}, screened_out}, ...]
    }
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from json import decoder as _json_decoder
from json import scanner as _json_scanner
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .circuit import GratingCoupler, RingResonator, Splitter, coupler_transmission, linear_to_db
from .detector import DarkCountParams, EfficiencyCurveParams, NanowireDesign, critical_current

FORMAT = "sspdmatrix-chip/1"
MAX_ROWS = 12
MAX_COLUMNS = 20
MAX_COUPLER_DESIGNS = 5
DEFAULT_PRESCREEN_DB = 3.0


class ChipConfigError(ValueError):
    pass


class AddressError(LookupError):
    pass


@dataclass(frozen=True)
class ReferenceCoupler:
    id: str
    coupler: str
    transmission_db: float


@dataclass(frozen=True)
class DeviceRecord:
    position: tuple[int, int]
    design: str
    coupler: str
    ring: str | None = None
    measured: Mapping[str, float] = field(default_factory=dict)
    screened_out: bool = False


@dataclass(frozen=True)
class DeviceHandle:
    """Everything an experiment needs about one matrix cell."""

    record: DeviceRecord
    design: NanowireDesign
    coupler: GratingCoupler
    ring: RingResonator | None
    splitter: Splitter

    @property
    def position(self) -> tuple[int, int]:
        return self.record.position


@dataclass(frozen=True)
class ChipLayout:
    designs: Mapping[str, NanowireDesign]
    couplers: Mapping[str, GratingCoupler]
    cells: Mapping[tuple[int, int], DeviceRecord]
    rings: Mapping[str, RingResonator] = field(default_factory=dict)
    reference_couplers: tuple[ReferenceCoupler, ...] = ()
    splitter: Splitter = Splitter()
    rows: int = MAX_ROWS
    columns: int = MAX_COLUMNS
    name: str = ""

    def __post_init__(self):
        if not (0 < self.rows <= MAX_ROWS and 0 < self.columns <= MAX_COLUMNS):
            raise ChipConfigError(f"grid {self.rows}x{self.columns} exceeds {MAX_ROWS}x{MAX_COLUMNS}")
        if len(self.couplers) > MAX_COUPLER_DESIGNS:
            raise ChipConfigError(f"{len(self.couplers)} coupler designs; at most {MAX_COUPLER_DESIGNS} allowed")
        for (row, col), rec in self.cells.items():
            where = f"cell ({row}, {col})"
            if not (0 <= row < self.rows and 0 <= col < self.columns):
                raise ChipConfigError(f"{where} lies outside the {self.rows}x{self.columns} grid")
            if rec.design not in self.designs:
                raise ChipConfigError(f"{where} references unknown design {rec.design!r}")
            if rec.coupler not in self.couplers:
                raise ChipConfigError(f"{where} references unknown coupler {rec.coupler!r}")
            if rec.ring is not None and rec.ring not in self.rings:
                raise ChipConfigError(f"{where} references unknown ring {rec.ring!r}")

    def __len__(self) -> int:
        return len(self.cells)

    def retained(self) -> list[DeviceRecord]:
        return [self.cells[pos] for pos in sorted(self.cells) if not self.cells[pos].screened_out]


# --- JSON with line numbers -------------------------------------------------


class _LineDict(dict):
    line = 0


def _line_aware_decoder() -> json.JSONDecoder:
    dec = json.JSONDecoder()

    def parse_object(s_and_end, *args):
        text, start = s_and_end
        obj, end = _json_decoder.JSONObject(s_and_end, *args)
        out = _LineDict(obj)
        out.line = text.count("\n", 0, start) + 1
        return out, end

    dec.parse_object = parse_object
    dec.scan_once = _json_scanner.py_make_scanner(dec)
    return dec


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, node, message: str):
        line = getattr(node, "line", 0)
        where = f"{self.source}:{line}" if line else self.source
        raise ChipConfigError(f"{where}: {message}")

    def get(self, node, key, kind=float, default=...):
        if key not in node:
            if default is ...:
                self.fail(node, f"missing field {key!r}")
            return default
        value = node[key]
        try:
            if kind is float:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise TypeError
                return float(value)
            if kind is int:
                if isinstance(value, bool) or int(value) != value:
                    raise TypeError
                return int(value)
            if kind is str and not isinstance(value, str):
                raise TypeError
            if kind is bool and not isinstance(value, bool):
                raise TypeError
            return value
        except (TypeError, ValueError):
            self.fail(node, f"field {key!r} must be {kind.__name__}, got {value!r}")


def _design_from(reader: _Reader, ident: str, node) -> NanowireDesign:
    g = reader.get
    efficiency = None
    if node.get("efficiency") is not None:
        eff = node["efficiency"]
        efficiency = EfficiencyCurveParams(g(eff, "steepness"), tuple(tuple(row) for row in eff["table"]))
    dark = None
    if node.get("dark_counts") is not None:
        dc = node["dark_counts"]
        dark = DarkCountParams(
            ref_rate=g(dc, "ref_rate_hz"),
            ref_bias=g(dc, "ref_bias"),
            ref_temperature=g(dc, "ref_temperature_k"),
            bias_slope=g(dc, "bias_slope"),
            temperature_slope=g(dc, "temperature_slope_per_k"),
        )
    return NanowireDesign(
        width=g(node, "width_nm"),
        length=g(node, "length_um"),
        film_thickness=g(node, "film_thickness_nm", default=3.5),
        absorption_rate=g(node, "absorption_db_per_um", default=1.0),
        sheet_inductance=g(node, "sheet_inductance_ph_per_sq", default=NanowireDesign.sheet_inductance),
        critical_temperature=g(node, "tc_k", default=NanowireDesign.critical_temperature),
        critical_current_density=g(node, "jc0_a_per_m2", default=NanowireDesign.critical_current_density),
        efficiency=efficiency,
        dark_counts=dark,
        name=ident,
    )


def _ring_from(reader: _Reader, node) -> RingResonator:
    g = reader.get
    return RingResonator(
        circumference=g(node, "circumference_mm"),
        group_index=g(node, "group_index"),
        t_through=g(node, "t_through"),
        alpha=g(node, "alpha_per_m", default=0.0),
        topology=g(node, "topology", str, default="add_drop"),
        t_drop=g(node, "t_drop", default=None),
    )


def _section(reader, doc, key, builder):
    out = {}
    section = doc.get(key, {})
    if not isinstance(section, dict):
        reader.fail(doc, f"section {key!r} must be an object")
    for ident, node in section.items():
        if not isinstance(node, dict):
            reader.fail(section, f"{key} entry {ident!r} must be an object")
        try:
            out[ident] = builder(ident, node)
        except ChipConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            reader.fail(node, f"{key} entry {ident!r}: {exc}")
    return out


def parse_chip_config(text: str, source: str = "<chip>") -> ChipLayout:
    reader = _Reader(source)
    try:
        doc = _line_aware_decoder().decode(text)
    except json.JSONDecodeError as exc:
        raise ChipConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ChipConfigError(f"{source}: top level must be an object")
    fmt = doc.get("format", FORMAT)
    if fmt != FORMAT:
        reader.fail(doc, f"unsupported format {fmt!r}")
    grid = doc.get("grid", {})
    rows = reader.get(grid, "rows", int, default=MAX_ROWS) if grid else MAX_ROWS
    columns = reader.get(grid, "columns", int, default=MAX_COLUMNS) if grid else MAX_COLUMNS
    if not (0 < rows <= MAX_ROWS and 0 < columns <= MAX_COLUMNS):
        reader.fail(grid, f"grid {rows}x{columns} exceeds {MAX_ROWS}x{MAX_COLUMNS}")

    designs = _section(reader, doc, "designs", lambda i, n: _design_from(reader, i, n))
    couplers = _section(
        reader,
        doc,
        "couplers",
        lambda i, n: GratingCoupler(
            reader.get(n, "center_wavelength_nm"),
            reader.get(n, "bandwidth_fwhm_nm", default=30.0),
            reader.get(n, "peak_loss_db", default=-13.0),
        ),
    )
    if len(couplers) > MAX_COUPLER_DESIGNS:
        reader.fail(doc, f"{len(couplers)} coupler designs; at most {MAX_COUPLER_DESIGNS} allowed")
    rings = _section(reader, doc, "rings", lambda i, n: _ring_from(reader, n))

    splitter = Splitter()
    if doc.get("splitter") is not None:
        node = doc["splitter"]
        splitter = Splitter(reader.get(node, "nominal_ratio", default=0.5), reader.get(node, "imbalance_db", default=0.0))

    references = []
    for node in doc.get("reference_couplers", []):
        ref = ReferenceCoupler(reader.get(node, "id", str), reader.get(node, "coupler", str), reader.get(node, "transmission_db"))
        if ref.coupler not in couplers:
            reader.fail(node, f"reference coupler {ref.id!r} uses unknown coupler design {ref.coupler!r}")
        references.append(ref)

    cells: dict[tuple[int, int], DeviceRecord] = {}
    for node in doc.get("cells", []):
        if not isinstance(node, dict):
            reader.fail(doc, "cells must be objects")
        row, col = reader.get(node, "row", int), reader.get(node, "col", int)
        where = f"cell ({row}, {col})"
        if not (0 <= row < rows and 0 <= col < columns):
            reader.fail(node, f"{where} lies outside the {rows}x{columns} grid")
        if (row, col) in cells:
            reader.fail(node, f"{where} is declared twice")
        design = reader.get(node, "design", str)
        coupler = reader.get(node, "coupler", str)
        ring = node.get("ring")
        if design not in designs:
            reader.fail(node, f"{where} references unknown design {design!r}")
        if coupler not in couplers:
            reader.fail(node, f"{where} references unknown coupler {coupler!r}")
        if ring is not None and ring not in rings:
            reader.fail(node, f"{where} references unknown ring {ring!r}")
        measured = node.get("measured") or {}
        if not isinstance(measured, dict):
            reader.fail(node, f"{where}: 'measured' must be an object")
        cells[(row, col)] = DeviceRecord(
            (row, col),
            design,
            coupler,
            ring,
            {str(k): float(v) for k, v in measured.items()},
            reader.get(node, "screened_out", bool, default=False),
        )
    return ChipLayout(designs, couplers, cells, rings, tuple(references), splitter, rows, columns, doc.get("name", ""))


def load_chip_config(path) -> ChipLayout:
    path = Path(path)
    return parse_chip_config(path.read_text(), str(path))


def reference_chip_path() -> Path:
    return Path(__file__).parent / "data" / "reference_chip.json"


def load_reference_chip() -> ChipLayout:
    return load_chip_config(reference_chip_path())


def _design_to_dict(d: NanowireDesign) -> dict:
    out: dict[str, Any] = {
        "width_nm": d.width,
        "length_um": d.length,
        "film_thickness_nm": d.film_thickness,
        "absorption_db_per_um": d.absorption_rate,
        "sheet_inductance_ph_per_sq": d.sheet_inductance,
        "tc_k": d.critical_temperature,
        "jc0_a_per_m2": d.critical_current_density,
        "efficiency": None,
        "dark_counts": None,
    }
    if d.efficiency is not None:
        out["efficiency"] = {"steepness": d.efficiency.steepness, "table": [list(r) for r in d.efficiency.table]}
    if d.dark_counts is not None:
        dc = d.dark_counts
        out["dark_counts"] = {
            "ref_rate_hz": dc.ref_rate,
            "ref_bias": dc.ref_bias,
            "ref_temperature_k": dc.ref_temperature,
            "bias_slope": dc.bias_slope,
            "temperature_slope_per_k": dc.temperature_slope,
        }
    return out


def layout_to_dict(layout: ChipLayout) -> dict:
    return {
        "format": FORMAT,
        "name": layout.name,
        "grid": {"rows": layout.rows, "columns": layout.columns},
        "designs": {k: _design_to_dict(layout.designs[k]) for k in sorted(layout.designs)},
        "couplers": {
            k: {
                "center_wavelength_nm": c.center_wavelength,
                "bandwidth_fwhm_nm": c.bandwidth_fwhm,
                "peak_loss_db": c.peak_loss_db,
            }
            for k, c in sorted(layout.couplers.items())
        },
        "rings": {
            k: {
                "circumference_mm": r.circumference,
                "group_index": r.group_index,
                "t_through": r.t_through,
                "t_drop": r.t_drop,
                "alpha_per_m": r.alpha,
                "topology": r.topology,
            }
            for k, r in sorted(layout.rings.items())
        },
        "splitter": {"nominal_ratio": layout.splitter.nominal_ratio, "imbalance_db": layout.splitter.imbalance_db},
        "reference_couplers": [
            {"id": r.id, "coupler": r.coupler, "transmission_db": r.transmission_db} for r in layout.reference_couplers
        ],
        "cells": [
            {
                "row": rec.position[0],
                "col": rec.position[1],
                "design": rec.design,
                "coupler": rec.coupler,
                "ring": rec.ring,
                "measured": dict(sorted(rec.measured.items())),
                "screened_out": rec.screened_out,
            }
            for _, rec in sorted(layout.cells.items())
        ],
    }


def dumps_chip_config(layout: ChipLayout) -> str:
    return json.dumps(layout_to_dict(layout), indent=1) + "\n"


def dump_chip_config(layout: ChipLayout, path) -> None:
    Path(path).write_text(dumps_chip_config(layout))


# --- operations ---------------------------------------------------------------


def address_device(layout: ChipLayout, row: int, col: int) -> DeviceHandle:
    if not (0 <= row < layout.rows and 0 <= col < layout.columns):
        raise AddressError(f"position ({row}, {col}) is outside the {layout.rows}x{layout.columns} matrix")
    rec = layout.cells.get((row, col))
    if rec is None:
        raise AddressError(f"position ({row}, {col}) holds no device")
    ring = layout.rings[rec.ring] if rec.ring is not None else None
    return DeviceHandle(rec, layout.designs[rec.design], layout.couplers[rec.coupler], ring, layout.splitter)


def reference_table(layout: ChipLayout) -> dict[float, list[float]]:
    """Reference-coupler transmissions (dB) grouped by design center wavelength."""
    table: dict[float, list[float]] = {}
    for ref in layout.reference_couplers:
        wl = layout.couplers[ref.coupler].center_wavelength
        table.setdefault(wl, []).append(ref.transmission_db)
    return table


def device_coupler_db(layout: ChipLayout, rec: DeviceRecord) -> float:
    """Recorded coupler transmission, or the design value when none was recorded."""
    if "coupler_transmission_db" in rec.measured:
        return float(rec.measured["coupler_transmission_db"])
    coupler = layout.couplers[rec.coupler]
    return float(linear_to_db(coupler_transmission(coupler, coupler.center_wavelength)))


def prescreen_devices(
    layout: ChipLayout,
    reference_transmissions: Mapping[float, Any] | None = None,
    threshold_db: float = DEFAULT_PRESCREEN_DB,
) -> ChipLayout:
    """Flag devices whose coupler deviates from the reference median by more than ``threshold_db``.

    The reference median is taken per wavelength and interpolated linearly to
    each device's coupler center wavelength. Flags are only ever added.
    """
    table = reference_table(layout) if reference_transmissions is None else reference_transmissions
    if not table:
        raise ValueError("reference transmission table is empty")
    wls = np.array(sorted(table), dtype=float)
    medians = np.array([np.median(np.asarray(table[w], dtype=float)) for w in sorted(table)])
    cells = {}
    for pos, rec in layout.cells.items():
        center = layout.couplers[rec.coupler].center_wavelength
        reference = float(np.interp(center, wls, medians))
        deviates = abs(device_coupler_db(layout, rec) - reference) > threshold_db
        cells[pos] = replace(rec, screened_out=rec.screened_out or deviates)
    return replace(layout, cells=cells)


@dataclass(frozen=True)
class SurveyRow:
    row: int
    col: int
    width_nm: float
    length_um: float
    ic_ua: float


def survey_critical_currents(layout: ChipLayout, temperature: float) -> list[SurveyRow]:
    """Critical current of every retained device, ordered by width then position."""
    out = []
    for rec in layout.retained():
        design = layout.designs[rec.design]
        out.append(SurveyRow(rec.position[0], rec.position[1], design.width, design.length,
                             critical_current(design, temperature)))
    out.sort(key=lambda r: (r.width_nm, r.row, r.col))
    return out


def group_mean_by_width(rows: list[SurveyRow]) -> dict[float, float]:
    groups: dict[float, list[float]] = {}
    for r in rows:
        groups.setdefault(r.width_nm, []).append(r.ic_ua)
    return {w: float(np.mean(v)) for w, v in sorted(groups.items())}


def write_survey_csv(path, rows: list[SurveyRow]) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "width_nm", "length_um", "Ic_uA"])
        for r in rows:
            writer.writerow([r.row, r.col, repr(r.width_nm), repr(r.length_um), repr(r.ic_ua)])
