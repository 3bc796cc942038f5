"""Dense immutable tensor: the value type for data, parameters and gradients."""

import numpy as np

from cpsample_lab.common import NonFiniteException

# dtype codes used by the tensor archive
STORAGE_DTYPES = {"f32": np.float32, "f64": np.float64}


class Tensor:
    """Row-major float64 array wrapper, read-only once constructed.

    `storage` only affects what `stored()` returns (the checkpoint representation); all math is
    done in 64-bit.
    """

    __slots__ = ("_data", "storage")

    def __init__(self, data, storage="f64", check_finite=True):
        if storage not in STORAGE_DTYPES:
            raise ValueError(f"unknown storage dtype '{storage}'")
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        if check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteException(f"non-finite value in tensor of shape {list(arr.shape)}")
        arr.flags.writeable = False
        self._data = arr
        self.storage = storage

    @property
    def shape(self):
        return list(self._data.shape)

    @property
    def data(self):
        """Read-only numpy view of the values."""
        return self._data

    @property
    def size(self):
        return self._data.size

    def numpy(self):
        """Writable copy of the values."""
        return self._data.copy()

    def item(self):
        return float(self._data.reshape(-1)[0]) if self._data.size == 1 else self._data.item()

    def stored(self):
        return self._data.astype(STORAGE_DTYPES[self.storage])

    def __len__(self):
        return self._data.shape[0] if self._data.ndim else 1

    def __repr__(self):
        return f"Tensor(shape={self.shape}, storage={self.storage})"


def as_array(value):
    """Accept Tensor, numpy array or nested lists; return a float64 ndarray."""
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)
