"""Synthetic smooth objectives and their noisy gradient oracles."""
from dataclasses import dataclass, field

import numpy as np

from . import rng


def _check_point(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (dim,):
        raise ValueError(f"expected a point of shape ({dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    return x


class Objective:
    """A smooth scalar field with a certified gradient-Lipschitz bound.

    Subclasses set ``dim``, ``beta`` and ``lower_bound`` and implement the
    unchecked kernels ``_value`` and ``_gradient``.  The public methods
    validate their input; the replay engine calls the kernels directly so
    a diverging run yields ``inf``/``nan`` instead of an exception.
    """

    dim: int
    beta: float
    lower_bound: float = 0.0
    convex: bool = False

    def value(self, x):
        return self._value(_check_point(x, self.dim))

    def gradient(self, x):
        return self._gradient(_check_point(x, self.dim))

    def value_batch(self, X):
        """``f`` on each row of ``X``."""
        return np.array([self._value(x) for x in np.asarray(X, dtype=np.float64)])

    def _value(self, x):
        raise NotImplementedError

    def _gradient(self, x):
        raise NotImplementedError

    def optimum_value(self):
        """Known ``min f`` if available, else ``None``."""
        return None

    def descriptor(self):
        raise NotImplementedError


class QuadraticObjective(Objective):
    """``f(x) = 0.5 x'Ax - b'x + c`` with ``c`` chosen so that ``min f = 0``.

    ``b`` must lie in the range of ``A`` for the minimum to exist.
    """

    convex = True

    def __init__(self, A, b=None):
        A = np.array(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be a square matrix")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        A = 0.5 * (A + A.T)
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -1e-12 * max(1.0, abs(eig[-1])):
            raise ValueError("A must be positive semidefinite")
        self.dim = A.shape[0]
        self.A = A
        self.b = np.zeros(self.dim) if b is None else _check_point(b, self.dim).copy()
        self.beta = float(max(eig[-1], 0.0))
        self.spectrum = eig
        self.minimizer, *_ = np.linalg.lstsq(A, self.b, rcond=None)
        if not np.allclose(A @ self.minimizer, self.b, atol=1e-9 * (1 + np.abs(self.b).max())):
            raise ValueError("b is not in the range of A; f is unbounded below")
        self.c = 0.5 * float(self.b @ self.minimizer)
        self.lower_bound = 0.0

    @classmethod
    def from_spectrum(cls, spectrum, center=None):
        """Diagonal quadratic ``0.5 (x - center)' diag(spectrum) (x - center)``."""
        spectrum = np.asarray(spectrum, dtype=np.float64)
        A = np.diag(spectrum)
        center = np.zeros(len(spectrum)) if center is None else np.asarray(center, dtype=np.float64)
        obj = cls(A, A @ center)
        obj.minimizer = center.copy()
        obj.c = 0.5 * float(obj.b @ center)
        return obj

    def _value(self, x):
        # centered form keeps f >= 0 in floating point
        e = x - self.minimizer
        return max(0.5 * float(e @ (self.A @ e)), 0.0)

    def _gradient(self, x):
        return self.A @ x - self.b

    def value_batch(self, X):
        E = np.asarray(X, dtype=np.float64) - self.minimizer
        return np.maximum(0.5 * np.einsum("ij,jk,ik->i", E, self.A, E), 0.0)

    def optimum_value(self):
        return 0.0

    def descriptor(self):
        off_diag = self.A - np.diag(np.diag(self.A))
        if np.any(off_diag):
            raise ValueError("only diagonal quadratics have a JSON descriptor")
        d = {"kind": "quadratic", "dim": self.dim, "spectrum": np.diag(self.A).tolist()}
        if np.any(self.minimizer):
            d["center"] = self.minimizer.tolist()
        return d


class LogSquareObjective(Objective):
    """Nonconvex separable objective ``f(x) = sum_i log(1 + x_i^2)``.

    The coordinate function has second derivative ``2(1-u^2)/(1+u^2)^2``
    bounded by 2 in absolute value, so ``beta = 2``.
    """

    beta = 2.0
    lower_bound = 0.0

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)

    def _value(self, x):
        return float(np.sum(np.log1p(x * x)))

    def _gradient(self, x):
        return 2.0 * x / (1.0 + x * x)

    def value_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.sum(np.log1p(X * X), axis=1)

    def optimum_value(self):
        return 0.0

    def descriptor(self):
        return {"kind": "logsquare", "dim": self.dim}


def evaluate(obj, x):
    return obj.value(x)


def grad(obj, x):
    return obj.gradient(x)


@dataclass(frozen=True)
class NoisyGradientOracle:
    """Exact gradient plus spherical Gaussian noise with ``E|noise|^2 = sigma^2``.

    The noise for ``draw_index`` is a pure function of ``(seed, draw_index)``.
    """

    objective: Objective
    sigma: float = 0.0
    seed: int = 0
    _scale: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "_scale", self.sigma / np.sqrt(self.objective.dim))

    def noise(self, draw_index):
        if self.sigma == 0:
            return np.zeros(self.objective.dim)
        coords = np.arange(self.objective.dim, dtype=np.uint64)
        return self._scale * rng.normal_array(self.seed, rng.STREAM_NOISE, draw_index, coords)

    def noise_block(self, draw_indices):
        """Noise rows for many draw indices at once, shape ``(n, dim)``."""
        draw_indices = np.asarray(draw_indices, dtype=np.uint64)
        if self.sigma == 0:
            return np.zeros((len(draw_indices), self.objective.dim))
        coords = np.arange(self.objective.dim, dtype=np.uint64)
        z = rng.normal_array(self.seed, rng.STREAM_NOISE, draw_indices[:, None], coords[None, :])
        return self._scale * z

    def sample(self, x, draw_index):
        if draw_index < 0:
            raise ValueError("draw_index must be nonnegative")
        g = self.objective.gradient(x)
        if self.sigma == 0:
            return g
        return g + self.noise(draw_index)

    def with_seed(self, seed):
        return NoisyGradientOracle(self.objective, self.sigma, seed)


def sample_gradient(oracle, x, draw_index):
    return oracle.sample(x, draw_index)


def objective_from_descriptor(desc):
    """Build ``(objective, oracle)`` from a JSON-ready descriptor dict."""
    kind = desc.get("kind")
    if kind == "quadratic":
        spectrum = desc["spectrum"]
        if "dim" in desc and desc["dim"] != len(spectrum):
            raise ValueError("dim does not match spectrum length")
        obj = QuadraticObjective.from_spectrum(spectrum, desc.get("center"))
    elif kind == "logsquare":
        obj = LogSquareObjective(int(desc["dim"]))
    else:
        raise ValueError(f"unknown objective kind {kind!r}")
    oracle = NoisyGradientOracle(obj, float(desc.get("sigma", 0.0)), int(desc.get("seed", 0)))
    return obj, oracle


def oracle_descriptor(oracle):
    d = oracle.objective.descriptor()
    d["sigma"] = oracle.sigma
    d["seed"] = oracle.seed
    return d
