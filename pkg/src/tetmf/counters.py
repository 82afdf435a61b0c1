"""Logical flop/byte counters incremented during operator application.

These stand in for hardware performance counters: the orchestrating code
adds the exact arithmetic volume of each kernel call (which is determined by
the array shapes, including padded lanes) and the index/vector traffic of
the modeled categories.  No cache simulation is attempted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_NAMES = (
    "cell_interp_flops",   # cell E / E^T products
    "cell_qpoint_flops",   # Jacobian transforms and JxW scaling
    "cell_sum_flops",      # accumulation into the result vector
    "face_interp_flops",   # face E_f / E_f^T products, both sides
    "face_qpoint_flops",   # jump/average/penalty arithmetic
    "index_bytes",         # gather/scatter index traffic (4 B each)
    "vector_bytes",        # unique DoF read/write traffic (24 B per DoF)
    "geometry_bytes",      # per-cell geometry pointer traffic
    "spmv_flops",
)


@dataclass
class FlopCounters:
    values: np.ndarray = field(default_factory=lambda: np.zeros(len(_NAMES), dtype=np.int64))

    def reset(self) -> None:
        self.values[:] = 0

    def add(self, name: str, amount: int) -> None:
        self.values[_NAMES.index(name)] += int(amount)

    def __getitem__(self, name: str) -> int:
        return int(self.values[_NAMES.index(name)])

    @property
    def cell_flops(self) -> int:
        return self["cell_interp_flops"] + self["cell_qpoint_flops"] + self["cell_sum_flops"]

    @property
    def face_flops(self) -> int:
        return self["face_interp_flops"] + self["face_qpoint_flops"]

    @property
    def total_flops(self) -> int:
        return self.cell_flops + self.face_flops + self["spmv_flops"]

    def as_dict(self) -> dict:
        out = {n: int(v) for n, v in zip(_NAMES, self.values)}
        out["cell_flops"] = self.cell_flops
        out["face_flops"] = self.face_flops
        out["total_flops"] = self.total_flops
        return out
