"""Unitary measurement and sparsity bases with fast application and row extraction.

Every operator here is an n x n unitary map exposed matrix-free: ``forward``
applies the matrix, ``adjoint`` applies its conjugate transpose, and both act
along axis 0 so a batch of vectors can be pushed through in one call. Operators
are immutable after construction and safe to share across concurrent workers;
each application allocates its own scratch.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "UnitaryOperator",
    "make_dft_operator",
    "make_haar_operator",
    "make_dense_operator",
    "compose_measurement_basis",
    "row_vector",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class UnitaryOperator:
    """Base class for n x n unitary transforms.

    Attributes:
        n: ambient dimension.
        field: "real" or "complex", the scalar field of the matrix entries.
        kind: one of dft1d, dft2d, haar1d, haar2d, dense, composed.
    """

    kind = "abstract"

    def __init__(self, n: int, field: str):
        self.n = int(n)
        self.field = field

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.ndim not in (1, 2) or x.shape[0] != self.n:
            raise ValueError(
                f"expected array of shape ({self.n},) or ({self.n}, batch), got {x.shape}"
            )
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Apply the operator along axis 0 of ``x`` (shape (n,) or (n, batch))."""
        return self._forward(self._check_input(x))

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """Apply the conjugate transpose along axis 0 of ``y``."""
        return self._adjoint(self._check_input(y))

    def matrix(self) -> np.ndarray:
        """Return the dense n x n matrix (column j is forward(e_j))."""
        return self.forward(np.eye(self.n))

    def _forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} kind={self.kind} n={self.n} field={self.field}>"


class _Dft1d(UnitaryOperator):
    kind = "dft1d"

    def __init__(self, n: int):
        super().__init__(n, "complex")

    def _forward(self, x):
        return np.fft.fft(x, axis=0, norm="ortho")

    def _adjoint(self, y):
        return np.fft.ifft(y, axis=0, norm="ortho")


class _Dft2d(UnitaryOperator):
    kind = "dft2d"

    def __init__(self, side: int):
        super().__init__(side * side, "complex")
        self.side = side

    def _image(self, x):
        # row-major flattened square image, batch trailing
        batched = x.ndim == 2
        img = x.reshape(self.side, self.side, -1)
        return img, batched

    def _forward(self, x):
        img, batched = self._image(x)
        out = np.fft.fft2(img, axes=(0, 1), norm="ortho")
        return out.reshape(self.n, -1) if batched else out.reshape(self.n)

    def _adjoint(self, y):
        img, batched = self._image(y)
        out = np.fft.ifft2(img, axes=(0, 1), norm="ortho")
        return out.reshape(self.n, -1) if batched else out.reshape(self.n)


def _haar_forward_axis0(arr: np.ndarray, levels: int) -> np.ndarray:
    """Multi-level orthonormal Haar analysis along axis 0, in place on a copy.

    Coefficient layout: approximation at the coarsest level first, then detail
    bands from coarsest to finest.
    """
    out = np.array(arr, dtype=np.result_type(arr.dtype, np.float64), copy=True)
    length = out.shape[0]
    for _ in range(levels):
        half = length // 2
        band = out[:length]
        even = band[0::2].copy()
        odd = band[1::2].copy()
        out[:half] = (even + odd) * _INV_SQRT2
        out[half:length] = (even - odd) * _INV_SQRT2
        length = half
    return out


def _haar_adjoint_axis0(arr: np.ndarray, levels: int) -> np.ndarray:
    out = np.array(arr, dtype=np.result_type(arr.dtype, np.float64), copy=True)
    length = out.shape[0] >> levels
    for _ in range(levels):
        double = length * 2
        approx = out[:length].copy()
        detail = out[length:double].copy()
        out[0:double:2] = (approx + detail) * _INV_SQRT2
        out[1:double:2] = (approx - detail) * _INV_SQRT2
        length = double
    return out


class _Haar1d(UnitaryOperator):
    kind = "haar1d"

    def __init__(self, n: int, levels: int):
        super().__init__(n, "real")
        self.levels = levels

    def _forward(self, x):
        return _haar_forward_axis0(x, self.levels)

    def _adjoint(self, y):
        return _haar_adjoint_axis0(y, self.levels)


class _Haar2d(UnitaryOperator):
    """Tensor-product Haar on a row-major flattened square image.

    The full 1D multi-level transform is applied separably: first along image
    rows, then along image columns.
    """

    kind = "haar2d"

    def __init__(self, side: int, levels: int):
        super().__init__(side * side, "real")
        self.side = side
        self.levels = levels

    def _separable(self, x, step):
        batched = x.ndim == 2
        batch = x.shape[1] if batched else 1
        img = x.reshape(self.side, self.side, batch)
        # along columns of the image (axis 0), batching the rest
        img = step(img.reshape(self.side, -1), self.levels).reshape(img.shape)
        # along rows: bring axis 1 first
        img = np.ascontiguousarray(np.moveaxis(img, 1, 0))
        img = step(img.reshape(self.side, -1), self.levels).reshape(img.shape)
        img = np.moveaxis(img, 0, 1)
        out = img.reshape(self.n, batch)
        return out if batched else out[:, 0]

    def _forward(self, x):
        return self._separable(x, _haar_forward_axis0)

    def _adjoint(self, y):
        return self._separable(y, _haar_adjoint_axis0)


class _Dense(UnitaryOperator):
    kind = "dense"

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("dense operator requires a square matrix")
        n = matrix.shape[0]
        if np.iscomplexobj(matrix):
            mat = matrix.astype(np.complex128)
            field = "complex"
        else:
            mat = matrix.astype(np.float64)
            field = "real"
        gram = mat.conj().T @ mat
        if np.max(np.abs(gram - np.eye(n))) > 1e-8:
            raise ValueError("matrix is not unitary within tolerance 1e-8")
        mat.setflags(write=False)
        super().__init__(n, field)
        self._mat = mat

    def _forward(self, x):
        return self._mat @ x

    def _adjoint(self, y):
        return self._mat.conj().T @ y


class _Composed(UnitaryOperator):
    """measurement . sparsity-adjoint, so priors live on coefficient vectors."""

    kind = "composed"

    def __init__(self, measurement: UnitaryOperator, sparsity: UnitaryOperator):
        if measurement.n != sparsity.n:
            raise ValueError(
                f"dimension mismatch: measurement n={measurement.n}, sparsity n={sparsity.n}"
            )
        field = "complex" if "complex" in (measurement.field, sparsity.field) else "real"
        super().__init__(measurement.n, field)
        self.measurement = measurement
        self.sparsity = sparsity

    def _forward(self, x):
        return self.measurement.forward(self.sparsity.adjoint(x))

    def _adjoint(self, y):
        return self.sparsity.forward(self.measurement.adjoint(y))


def make_dft_operator(n: int, *, two_dim: bool = False) -> UnitaryOperator:
    """Unitary discrete Fourier transform of length n (power of two, n >= 2).

    With ``two_dim`` the operator acts on row-major flattened square images and
    n must be a perfect square with power-of-two side.
    """
    n = int(n)
    if two_dim:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ValueError(f"2D transform needs a square image, n={n} is not a perfect square")
        if not _is_power_of_two(side) or side < 2:
            raise ValueError(f"side length must be a power of two >= 2, got {side}")
        return _Dft2d(side)
    if not _is_power_of_two(n) or n < 2:
        raise ValueError(f"n must be a power of two >= 2, got {n}")
    return _Dft1d(n)


def make_haar_operator(n: int, levels: int, *, two_dim: bool = False) -> UnitaryOperator:
    """Orthonormal Haar analysis operator of the given decomposition depth.

    levels=0 is the identity. 1D requires n divisible by 2**levels; the 2D
    variant acts separably on a row-major flattened square image whose side
    must be divisible by 2**levels.
    """
    n = int(n)
    levels = int(levels)
    if levels < 0:
        raise ValueError("levels must be nonnegative")
    if two_dim:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ValueError(f"2D transform needs a square image, n={n} is not a perfect square")
        if levels and side % (1 << levels) != 0:
            raise ValueError(f"side {side} not divisible by 2**{levels}")
        return _Haar2d(side, levels)
    if n < 1 or (levels and n % (1 << levels) != 0):
        raise ValueError(f"n={n} not divisible by 2**{levels}")
    return _Haar1d(n, levels)


def make_dense_operator(matrix: np.ndarray) -> UnitaryOperator:
    """Wrap an explicit unitary matrix (validated to 1e-8) as an operator."""
    return _Dense(matrix)


def compose_measurement_basis(
    measurement: UnitaryOperator, sparsity: UnitaryOperator
) -> UnitaryOperator:
    """Compose measurement-forward with sparsity-adjoint into one unitary map.

    The result applies sparsity.adjoint then measurement.forward, so that a
    prior expressed on sparsity coefficients is measured in the measurement
    basis.
    """
    return _Composed(measurement, sparsity)


def row_vector(op: UnitaryOperator, j: int) -> np.ndarray:
    """Return the j-th row f_j of the operator, 1-based, as a length-n vector.

    f_j satisfies f_j* x = (forward(x))_j for every x, so for complex operators
    it is the conjugate of the literal matrix row.
    """
    j = int(j)
    if not 1 <= j <= op.n:
        raise IndexError(f"row index {j} out of range 1..{op.n}")
    e = np.zeros(op.n)
    e[j - 1] = 1.0
    return op.adjoint(e)
