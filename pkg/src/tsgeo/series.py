"""Time series container shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class TimeSeries:
    """A T x N sample matrix with optional channel names.

    Rows are timesteps, columns are channels.  Values are stored as
    float64; a 1-D input is promoted to a single channel.
    """

    values: np.ndarray
    names: Optional[Sequence[str]] = field(default=None)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"time series must be 1-D or 2-D, got shape {arr.shape}")
        self.values = arr
        if self.names is not None:
            self.names = list(self.names)
            if len(self.names) != arr.shape[1]:
                raise ValueError(
                    f"{len(self.names)} channel names for {arr.shape[1]} channels"
                )

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def channel(self, k: int) -> np.ndarray:
        return self.values[:, k]


def as_series(x) -> TimeSeries:
    """Coerce an ndarray / list / TimeSeries into a TimeSeries."""
    if isinstance(x, TimeSeries):
        return x
    return TimeSeries(np.asarray(x, dtype=np.float64))
