"""Transfer operators on the joint fluctuator-Bloch space.

The ensemble-averaged Bloch dynamics of a qubit driven by telegraph
noise is exactly encoded by operators on a ``3 * 2**N`` dimensional
space (N fluctuators).  Two operators matter:

* the discrete one-interval transfer operator, which multiplies a
  switching-probability factor acting on the fluctuator levels with the
  per-level Bloch rotations of one interval, and
* the continuous-time generator, its ``dt -> 0`` limit, whose
  eigenvalues are the complex decay rates of the system.

The physical 3x3 transfer matrix at time t is the boundary contraction
``readout . exp(-t * generator) . prepare`` over fluctuator indices.

Basis ordering is fluctuator-major: index = 3 * (fluctuator state
index) + Bloch index (x=0, y=1, z=2), with level ``s=+1`` enumerated
first for each fluctuator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import SystemSpec, boundary_vectors, so3_generators, step_rotation

__all__ = [
    "Superoperator",
    "SpectralDecomposition",
    "EigendecompositionError",
    "ContractionError",
    "fluctuator_dissipator",
    "discrete_transfer_operator",
    "decoherence_generator",
    "spectral_decomposition",
    "evolve_operator",
    "transfer_from_spectral",
    "boundary_projectors",
]

KIND_STEP = "discrete-step"
KIND_GENERATOR = "generator"

ORDERING = "fluctuator-major"

# Eigenvector-matrix condition number beyond which the decomposition is
# treated as (near-)defective and exp(-t P) falls back to
# scaling-and-squaring.
DEFECTIVE_CONDITION = 1e8

# Residual gate for eigenpairs, ||P v - lam v|| / ||P||.
RESIDUAL_TOL = 1e-10

# Absolute bound on the imaginary part of the contracted 3x3 transfer
# matrix; larger values indicate an internal inconsistency.
IMAG_TOL = 1e-10

_TAU1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_TAU2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
_TAU3 = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


class EigendecompositionError(RuntimeError):
    """Raised when the eigensolver fails or returns unusable pairs."""


class ContractionError(RuntimeError):
    """Raised when the contracted transfer matrix is not real."""


@dataclass(frozen=True)
class Superoperator:
    """Complex square operator on the joint fluctuator-Bloch space.

    ``kind`` is either ``"discrete-step"`` (one-interval transfer,
    carries ``dt``) or ``"generator"`` (continuous-time).
    """

    mat: np.ndarray
    kind: str
    system: SystemSpec
    dt: float | None = None
    ordering: str = ORDERING

    def __post_init__(self):
        mat = np.array(self.mat, dtype=complex)
        d = self.system.dimension
        if mat.shape != (d, d):
            raise ValueError(f"operator must be {d}x{d}, got {mat.shape}")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @property
    def dimension(self) -> int:
        return self.mat.shape[0]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues with bi-orthonormal right/left eigenvectors.

    ``right_vectors[:, k]`` is the k-th right eigenvector and
    ``left_vectors[k, :]`` the matching left row vector, normalized so
    that ``left_vectors @ right_vectors == I``.  ``condition`` is the
    condition number of the right-eigenvector matrix; above
    ``DEFECTIVE_CONDITION`` the matrix is flagged defective and the
    left vectors may be unreliable.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray | None
    condition: float
    defective: bool
    max_residual: float
    operator: Superoperator

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)


def fluctuator_dissipator(gamma: float, eta: float) -> np.ndarray:
    """Switching part of the generator on one fluctuator's level space.

    Columns sum to zero (probability conservation, the uniform row
    vector annihilates it from the left) and the stationary distribution
    spans its kernel.  Eigenvalues are {0, 2 * gamma}.
    """
    return (
        gamma * np.eye(2, dtype=complex)
        - gamma * _TAU1
        + 1j * eta * _TAU2
        + eta * _TAU3
    )


def _pad_fluctuator_op(op2: np.ndarray, index: int, n: int) -> np.ndarray:
    """Embed a 2x2 fluctuator operator at position `index` of n factors."""
    left = np.eye(2**index, dtype=complex)
    right = np.eye(2 ** (n - index - 1), dtype=complex)
    return np.kron(np.kron(left, op2), right)


def discrete_transfer_operator(sys: SystemSpec, dt: float) -> Superoperator:
    """One-interval ensemble transfer operator (single fluctuator).

    The operator is the product of the switching-probability factor
    ``(1 - p) I - d tau_3 + p tau_1 - i d tau_2`` (with ``p = gamma*dt``,
    ``d = eta*dt``) acting on the fluctuator levels, and the
    block-diagonal pair of Bloch rotations for the two noise levels.
    Raising it to the N-th power and contracting with the boundary
    vectors averages an N-interval evolution over all 2**N level
    sequences with their exact probabilities.
    """
    if sys.n_fluctuators != 1:
        raise ValueError("the discrete transfer operator supports exactly one fluctuator")
    if sys.white_noise is not None and np.any(sys.white_noise > 0):
        raise ValueError(
            "white noise is defined only for the continuous-time generator; "
            "use decoherence_generator"
        )
    if dt <= 0:
        raise ValueError("dt must be > 0")
    f = sys.fluctuators[0]
    p = f.gamma * dt
    d = f.eta * dt
    if p >= 1.0:
        raise ValueError("dt too large for telegraph limit")
    if p + abs(d) > 1.0:
        raise ValueError("switching probabilities exceed 1; reduce dt")

    switch = (1.0 - p) * np.eye(2, dtype=complex) - d * _TAU3 + p * _TAU1 - 1j * d * _TAU2
    rot_plus = step_rotation(sys.b0, f.g, +1, dt)
    rot_minus = step_rotation(sys.b0, f.g, -1, dt)
    blocks = np.kron(np.diag([1.0, 0.0]), rot_plus) + np.kron(np.diag([0.0, 1.0]), rot_minus)
    mat = np.kron(switch, np.eye(3)) @ blocks.astype(complex)
    return Superoperator(mat=mat, kind=KIND_STEP, system=sys, dt=dt)


def decoherence_generator(sys: SystemSpec) -> Superoperator:
    """Continuous-time generator of the joint fluctuator-Bloch dynamics.

    Per fluctuator the generator carries the switching dissipator plus
    the noise-field coupling ``-i (g . L) tau_3``; the static field
    contributes ``-i b0 L_z`` and optional white noise adds
    ``sum_i v_i L_i**2 / 2`` on the Bloch block.  Independent
    fluctuators enter additively (joint switches are higher order in dt
    and absent by construction).
    """
    n = sys.n_fluctuators
    lx, ly, lz = so3_generators()
    dim_f = 2**n
    mat = np.zeros((3 * dim_f, 3 * dim_f), dtype=complex)

    bloch = -1j * sys.b0 * lz
    if sys.white_noise is not None:
        vx, vy, vz = sys.white_noise
        bloch = bloch + 0.5 * (vx * lx @ lx + vy * ly @ ly + vz * lz @ lz)
    mat += np.kron(np.eye(dim_f, dtype=complex), bloch)

    for i, f in enumerate(sys.fluctuators):
        g_dot_l = f.g[0] * lx + f.g[1] * ly + f.g[2] * lz
        mat += np.kron(_pad_fluctuator_op(fluctuator_dissipator(f.gamma, f.eta), i, n), np.eye(3))
        mat += -1j * np.kron(_pad_fluctuator_op(_TAU3, i, n), g_dot_l)

    return Superoperator(mat=mat, kind=KIND_GENERATOR, system=sys)


def spectral_decomposition(op: Superoperator) -> SpectralDecomposition:
    """Diagonalize a superoperator with bi-orthonormal left/right pairs.

    Left vectors are the rows of the inverse right-eigenvector matrix,
    which makes the bi-orthonormalization exact up to inversion error
    and keeps degenerate (but diagonalizable) subspaces consistently
    paired.  A condition number above ``DEFECTIVE_CONDITION`` or a
    failed inversion sets the ``defective`` flag.
    """
    try:
        eigenvalues, right = scipy.linalg.eig(op.mat)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigendecompositionError(f"eigensolver failed to converge: {exc}") from exc

    scale = float(np.linalg.norm(op.mat, 2))
    residuals = np.linalg.norm(op.mat @ right - right * eigenvalues, axis=0)
    max_residual = float(residuals.max() / scale) if scale > 0 else float(residuals.max())
    if max_residual > RESIDUAL_TOL:
        raise EigendecompositionError(
            f"eigenpair residual {max_residual:.3e} exceeds {RESIDUAL_TOL:.1e}"
        )

    condition = float(np.linalg.cond(right))
    defective = not np.isfinite(condition) or condition > DEFECTIVE_CONDITION
    left = None
    if np.isfinite(condition):
        try:
            left = np.linalg.inv(right)
        except np.linalg.LinAlgError:
            defective = True

    return SpectralDecomposition(
        eigenvalues=eigenvalues,
        right_vectors=right,
        left_vectors=left,
        condition=condition,
        defective=defective,
        max_residual=max_residual,
        operator=op,
    )


def boundary_projectors(sys: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Boundary contraction matrices for the full superoperator space.

    Returns the ``3 x d`` readout and ``d x 3`` preparation maps; the
    contraction ``readout @ M @ prepare`` of any superoperator M is the
    3x3 matrix acting on the physical Bloch vector.
    """
    readout, prepare = boundary_vectors(sys.distributions())
    eye3 = np.eye(3)
    return np.kron(readout, eye3), np.kron(prepare.reshape(-1, 1), eye3)


def _exp_generator(sd: SpectralDecomposition, t: float) -> np.ndarray:
    """exp(-t * generator) via the spectral decomposition or expm fallback."""
    if not sd.defective and sd.left_vectors is not None:
        return (sd.right_vectors * np.exp(-sd.eigenvalues * t)) @ sd.left_vectors
    return scipy.linalg.expm(-t * sd.operator.mat)


def _contract_real(full: np.ndarray, readout: np.ndarray, prepare: np.ndarray) -> np.ndarray:
    transfer = readout @ full @ prepare
    max_imag = float(np.abs(transfer.imag).max())
    if max_imag > IMAG_TOL:
        raise ContractionError(
            f"contracted transfer matrix has imaginary part {max_imag:.3e} "
            f"(tolerance {IMAG_TOL:.1e})"
        )
    return transfer.real


def evolve_operator(
    op: Superoperator,
    t: float,
    sd: SpectralDecomposition | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Full propagator exp(-t * generator) and its 3x3 boundary contraction.

    Parameters
    ----------
    op : generator-kind superoperator.
    t : evolution time, >= 0.
    sd : optional precomputed spectral decomposition of `op`, reused
        across a time grid.

    Returns
    -------
    (full, transfer) : the ``d x d`` propagator and the real 3x3
        transfer matrix mapping Bloch vectors.  ``t == 0`` returns exact
        identities.
    """
    if op.kind != KIND_GENERATOR:
        raise ValueError("evolve_operator requires a generator-kind superoperator")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return np.eye(op.dimension, dtype=complex), np.eye(3)
    if sd is None:
        sd = spectral_decomposition(op)
    full = _exp_generator(sd, t)
    readout, prepare = boundary_projectors(op.system)
    return full, _contract_real(full, readout, prepare)


def transfer_from_spectral(sd: SpectralDecomposition, times) -> np.ndarray:
    """Transfer matrices T(t) for a grid of times, one decomposition.

    Returns an array of shape ``(len(times), 3, 3)``.  Falls back to
    scaling-and-squaring per time point when the decomposition is
    defective.
    """
    op = sd.operator
    if op.kind != KIND_GENERATOR:
        raise ValueError("transfer_from_spectral requires a generator-kind superoperator")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    readout, prepare = boundary_projectors(op.system)
    out = np.empty((len(times), 3, 3))
    if not sd.defective and sd.left_vectors is not None:
        # T(t) = (readout V) diag(exp(-lam t)) (V^-1 prepare)
        a = readout @ sd.right_vectors
        b = sd.left_vectors @ prepare
        decay = np.exp(-np.outer(times, sd.eigenvalues))
        stacked = np.einsum("ck,tk,kd->tcd", a, decay, b)
        max_imag = float(np.abs(stacked.imag).max()) if len(times) else 0.0
        if max_imag > IMAG_TOL:
            raise ContractionError(
                f"contracted transfer matrix has imaginary part {max_imag:.3e}"
            )
        out[:] = stacked.real
    else:
        for i, t in enumerate(times):
            full = _exp_generator(sd, float(t))
            out[i] = _contract_real(full, readout, prepare)
    # t = 0 is the exact identity by definition.
    out[times == 0.0] = np.eye(3)
    return out
