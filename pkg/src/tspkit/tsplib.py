"""TSPLIB EUC_2D parsing, integer edge lengths, and unit-square normalization.

Only EUC_2D instances are supported.  Gap reporting against the published
integer optima must use tsplib_length (nearest-integer edge rounding) on the
raw coordinates; the solver itself works on normalized real coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Instance, InvalidArgument, TspError, Tour, _check_permutation


class ParseError(TspError):
    pass


class UnsupportedFormat(TspError):
    pass


class DegenerateInstance(TspError):
    pass


#: Published optimal integer tour lengths (EUC_2D convention).
KNOWN_OPTIMA: dict[str, int] = {
    "eil51": 426,
    "berlin52": 7542,
    "st70": 675,
    "eil76": 538,
    "pr76": 108159,
    "rat99": 1211,
    "kroA100": 21282,
    "kroB100": 22141,
    "kroC100": 20749,
    "kroD100": 21294,
    "kroE100": 22068,
    "rd100": 7910,
    "eil101": 629,
    "lin105": 14379,
    "pr107": 44303,
    "pr124": 59030,
    "bier127": 118282,
    "ch130": 6110,
    "pr136": 96772,
    "pr144": 58537,
    "ch150": 6528,
    "kroA150": 26524,
    "kroB150": 26130,
    "pr152": 73682,
    "u159": 42080,
    "rat195": 2323,
    "d198": 15780,
    "kroA200": 29368,
    "kroB200": 29437,
    "ts225": 126643,
    "tsp225": 3916,
    "pr226": 80369,
    "gil262": 2378,
    "pr264": 49135,
    "a280": 2579,
    "pr299": 48191,
    "lin318": 42029,
    "rd400": 15281,
    "fl417": 11861,
    "pr439": 107217,
    "pcb442": 50778,
    "d493": 35002,
    "u574": 36905,
    "rat575": 6773,
    "p654": 34643,
    "d657": 48912,
    "u724": 41910,
    "rat783": 8806,
    "pr1002": 259045,
}


@dataclass(frozen=True)
class TsplibRecord:
    name: str
    dimension: int
    edge_weight_type: str
    raw_coords: np.ndarray  # (N, 2), original units
    known_opt: int | None = None

    def __post_init__(self):
        c = np.array(self.raw_coords, dtype=np.float64)
        c.setflags(write=False)
        object.__setattr__(self, "raw_coords", c)


def parse_tsplib(text: str | bytes) -> TsplibRecord:
    """Parse a TSPLIB plain-text EUC_2D instance.

    Node ids are remapped to contiguous 0-based indices in file order; a
    trailing EOF marker is tolerated.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    name = ""
    dimension = None
    ewt = None
    coords: list[tuple[float, float]] = []
    seen_ids: set[int] = set()
    in_coords = False
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        if in_coords:
            if line == "EOF":
                break
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"bad coordinate line: {raw_line!r}")
            try:
                node_id = int(parts[0])
                x, y = float(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ParseError(f"bad coordinate line: {raw_line!r}") from exc
            if node_id in seen_ids:
                raise ParseError(f"duplicate node id {node_id}")
            seen_ids.add(node_id)
            coords.append((x, y))
            continue
        if line == "NODE_COORD_SECTION":
            in_coords = True
            continue
        if line == "EOF":
            break
        if ":" in line:
            key, _, value = line.partition(":")
            key = key.strip()
            value = value.strip()
        else:
            key, value = line, ""
        if key == "NAME":
            name = value
        elif key == "DIMENSION":
            try:
                dimension = int(value)
            except ValueError as exc:
                raise ParseError(f"bad DIMENSION: {value!r}") from exc
        elif key == "EDGE_WEIGHT_TYPE":
            ewt = value
    if dimension is None:
        raise ParseError("missing DIMENSION")
    if ewt is None:
        raise ParseError("missing EDGE_WEIGHT_TYPE")
    if ewt != "EUC_2D":
        raise UnsupportedFormat(f"unsupported EDGE_WEIGHT_TYPE {ewt!r}")
    if len(coords) != dimension:
        raise ParseError(f"DIMENSION is {dimension} but found {len(coords)} coordinates")
    return TsplibRecord(
        name=name,
        dimension=dimension,
        edge_weight_type=ewt,
        raw_coords=np.array(coords, dtype=np.float64),
        known_opt=KNOWN_OPTIMA.get(name),
    )


def serialize_tsplib(record: TsplibRecord) -> str:
    lines = [
        f"NAME : {record.name}",
        "TYPE : TSP",
        f"DIMENSION : {record.dimension}",
        f"EDGE_WEIGHT_TYPE : {record.edge_weight_type}",
        "NODE_COORD_SECTION",
    ]
    for i, (x, y) in enumerate(record.raw_coords, start=1):
        lines.append(f"{i} {x:.10g} {y:.10g}")
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def tsplib_length(record: TsplibRecord, tour: Tour | np.ndarray) -> int:
    """Tour length under the TSPLIB EUC_2D convention.

    Each edge contributes the Euclidean distance on raw coordinates rounded
    to the nearest integer; the sum is returned as an integer.
    """
    order = tour.order if isinstance(tour, Tour) else np.asarray(tour, dtype=np.int64)
    if order.shape != (record.dimension,):
        raise InvalidArgument(
            f"tour has {order.shape} cities, record has {record.dimension}"
        )
    if not np.array_equal(np.sort(order), np.arange(record.dimension)):
        raise InvalidArgument("tour order is not a permutation of the record cities")
    pts = record.raw_coords[order]
    diffs = pts - np.roll(pts, -1, axis=0)
    dists = np.sqrt((diffs * diffs).sum(axis=1))
    # TSPLIB nint(): round half away from zero (distances are >= 0).
    return int(np.floor(dists + 0.5).sum())


def normalize_to_unit_square(record: TsplibRecord) -> Instance:
    """Min-max scale into the unit square with one shared scale factor.

    A shared factor (the larger axis range) preserves angles, so the optimal
    tour order is unchanged.
    """
    coords = record.raw_coords
    lo = coords.min(axis=0)
    rng = coords.max(axis=0) - lo
    scale = rng.max()
    if scale <= 0.0:
        raise DegenerateInstance("all points identical")
    return Instance(coords=(coords - lo) / scale, id=record.name or None)


def load_tsplib_file(path: str | Path) -> TsplibRecord:
    return parse_tsplib(Path(path).read_text())
