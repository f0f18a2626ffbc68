"""Partitioning logical weight matrices into crossbar-sized tiles."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import MappingError


@dataclass(frozen=True)
class Tile:
    r0: int
    r1: int
    c0: int
    c1: int

    @property
    def rows(self) -> int:
        return self.r1 - self.r0

    @property
    def cols(self) -> int:
        return self.c1 - self.c0


@dataclass
class TilePlan:
    """Ceil-division grid covering a (rows x cols) logical matrix."""

    rows: int
    cols: int
    xbar_rows: int
    xbar_cols: int
    tiles: tuple[Tile, ...]
    grid: tuple[int, int]

    def __len__(self):
        return len(self.tiles)


def plan_tiles(rows: int, cols: int, xbar_rows: int, xbar_cols: int) -> TilePlan:
    if rows < 1 or cols < 1:
        raise MappingError(f"matrix dims must be >= 1, got {rows}x{cols}")
    if xbar_rows < 1 or xbar_cols < 1:
        raise MappingError(f"crossbar dims must be >= 1, got {xbar_rows}x{xbar_cols}")
    gr = -(-rows // xbar_rows)
    gc = -(-cols // xbar_cols)
    tiles = tuple(
        Tile(i * xbar_rows, min((i + 1) * xbar_rows, rows),
             j * xbar_cols, min((j + 1) * xbar_cols, cols))
        for i in range(gr) for j in range(gc))
    return TilePlan(rows, cols, xbar_rows, xbar_cols, tiles, (gr, gc))
