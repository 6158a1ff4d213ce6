"""Test matrices with prescribed Jordan structure.

``A = T J T^{-1}`` where ``J`` is block diagonal with Jordan blocks in the
subdiagonal convention (ones *below* the diagonal), so the eigenvector of a
block is its last basis vector.  ``T = Q1 diag(s) Q2`` with Haar-like
unitaries and a geometric singular-value ramp, which pins ``cond(T)`` to the
requested value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .numkit import complex_matrix, matrix_to_json, spectral_norm, svd_extremes

__all__ = [
    "BadSpec",
    "ZeroState",
    "JordanSpec",
    "GeneratedMatrix",
    "jordan_block",
    "jordan_matrix",
    "generate",
    "validate_exclusion",
    "input_state",
    "pt_symmetric_spec",
    "pt_symmetric_matrix",
    "random_unitary",
]

QEUE = "QEUE"
QERE = "QERE"


class BadSpec(ValueError):
    pass


class ZeroState(ValueError):
    pass


@dataclass(frozen=True)
class JordanSpec:
    """Target Jordan structure.

    ``targets`` lists the block indices whose eigenvectors are exposed in
    :attr:`GeneratedMatrix.eigvec_columns` (the eigenvalues an input state
    may be supported on).  ``None`` means every block.
    """

    blocks: tuple[tuple[complex, int], ...]
    transform_cond: float = 1.0
    seed: int = 0
    targets: Optional[tuple[int, ...]] = None
    scramble: bool = True

    def __post_init__(self):
        blocks = tuple((complex(lam), int(d)) for lam, d in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise BadSpec("at least one Jordan block is required")
        for lam, d in blocks:
            if d < 1:
                raise BadSpec(f"block size must be positive, got {d}")
            if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
                raise BadSpec("eigenvalues must be finite")
        if not self.transform_cond >= 1.0:
            raise BadSpec(f"transform_cond must be >= 1, got {self.transform_cond}")
        if self.targets is not None:
            targets = tuple(int(k) for k in self.targets)
            if any(k < 0 or k >= len(blocks) for k in targets):
                raise BadSpec("target index out of range")
            object.__setattr__(self, "targets", targets)

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.blocks)

    @property
    def max_block(self) -> int:
        return max(d for _, d in self.blocks)

    @property
    def target_blocks(self) -> tuple[int, ...]:
        return tuple(range(len(self.blocks))) if self.targets is None else self.targets

    @property
    def eigenvalues(self) -> list[complex]:
        return [lam for lam, _ in self.blocks]

    def to_json(self) -> dict:
        out = {
            "blocks": [[[lam.real, lam.imag], d] for lam, d in self.blocks],
            "transform_cond": self.transform_cond,
            "seed": self.seed,
        }
        if self.targets is not None:
            out["targets"] = list(self.targets)
        if not self.scramble:
            out["scramble"] = False
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "JordanSpec":
        unknown = set(obj) - {"blocks", "transform_cond", "seed", "targets", "scramble"}
        if unknown:
            raise BadSpec(f"unknown JordanSpec keys: {sorted(unknown)}")
        blocks = tuple((complex(lam[0], lam[1]), int(d)) for lam, d in obj["blocks"])
        targets = obj.get("targets")
        return cls(
            blocks,
            float(obj.get("transform_cond", 1.0)),
            int(obj.get("seed", 0)),
            None if targets is None else tuple(targets),
            bool(obj.get("scramble", True)),
        )


def jordan_block(lam: complex, d: int) -> np.ndarray:
    """``lam`` on the diagonal, ones on the first subdiagonal."""
    return complex(lam) * np.eye(d, dtype=complex) + np.eye(d, k=-1, dtype=complex)


def jordan_matrix(blocks: Sequence[tuple[complex, int]]) -> np.ndarray:
    n = sum(d for _, d in blocks)
    J = np.zeros((n, n), dtype=complex)
    k = 0
    for lam, d in blocks:
        J[k:k + d, k:k + d] = jordan_block(lam, d)
        k += d
    return J


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    # fix column phases so the distribution is Haar
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def _round_up_2sig(x: float) -> float:
    if x <= 0:
        return 0.0
    exp = math.floor(math.log10(x)) - 1
    step = 10.0 ** exp
    val = math.ceil(x / step - 1e-9) * step
    val = float(f"{val:.12g}")
    return val if val >= x else float(f"{val + step:.12g}")


@dataclass(frozen=True)
class GeneratedMatrix:
    A: np.ndarray
    T: np.ndarray
    J: np.ndarray
    spec: JordanSpec
    kappa_bar_witness: float
    alpha: float
    eigvec_columns: np.ndarray
    kappa_S: float
    T_inv: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def target_eigenvalues(self) -> list[complex]:
        return [self.spec.blocks[k][0] for k in self.spec.target_blocks]

    @property
    def block_offsets(self) -> list[int]:
        offs, k = [], 0
        for _, d in self.spec.blocks:
            offs.append(k)
            k += d
        return offs

    def scaled(self, c: float) -> "GeneratedMatrix":
        """The exact Jordan data of ``c * A``.

        ``c J`` is similar to the Jordan form of ``c A`` through a diagonal
        rescaling inside each block, so ``T`` picks up that diagonal.
        """
        c = float(c)
        if c == 0:
            raise BadSpec("scale must be non-zero")
        blocks = tuple((c * lam, d) for lam, d in self.spec.blocks)
        diag = np.concatenate([c ** np.arange(d, dtype=float) for _, d in self.spec.blocks])
        T = self.T * diag[None, :]
        T_inv = self.T_inv / diag[:, None]
        spec = JordanSpec(blocks, self.spec.transform_cond, self.spec.seed, self.spec.targets, self.spec.scramble)
        smax, smin = svd_extremes(T)
        return GeneratedMatrix(
            A=complex_matrix(c * self.A),
            T=complex_matrix(T),
            J=complex_matrix(jordan_matrix(blocks)),
            spec=spec,
            kappa_bar_witness=smax / smin,
            alpha=_round_up_2sig(abs(c) * self.alpha) if self.alpha > 0 else 0.0,
            eigvec_columns=self.eigvec_columns,
            kappa_S=self.kappa_S,
            T_inv=complex_matrix(T_inv),
        )

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "A": matrix_to_json(self.A),
            "T": matrix_to_json(self.T),
            "J": matrix_to_json(self.J),
            "kappa_bar_witness": self.kappa_bar_witness,
            "alpha": self.alpha,
            "eigvec_columns": {
                "rows": int(self.eigvec_columns.shape[0]),
                "cols": int(self.eigvec_columns.shape[1]),
                "entries": [[float(z.real), float(z.imag)] for z in self.eigvec_columns.reshape(-1)],
            },
            "kappa_S": self.kappa_S,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratedMatrix":
        from .numkit import matrix_from_json

        spec = JordanSpec.from_json(obj["spec"])
        T = matrix_from_json(obj["T"])
        ev = obj["eigvec_columns"]
        S = np.array([complex(re, im) for re, im in ev["entries"]]).reshape(ev["rows"], ev["cols"])
        return cls(
            A=matrix_from_json(obj["A"]),
            T=T,
            J=matrix_from_json(obj["J"]),
            spec=spec,
            kappa_bar_witness=float(obj["kappa_bar_witness"]),
            alpha=float(obj["alpha"]),
            eigvec_columns=complex_matrix(S, square=False),
            kappa_S=float(obj["kappa_S"]),
            T_inv=complex_matrix(np.linalg.inv(T)),
        )


def _transform(n: int, cond: float, rng: np.random.Generator, scramble: bool) -> np.ndarray:
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    s = cond ** (-np.arange(n) / (n - 1))
    if not scramble:
        return np.diag(s[::-1]).astype(complex)
    Q1 = random_unitary(n, rng)
    Q2 = random_unitary(n, rng)
    return (Q1 * s) @ Q2


def generate(spec: JordanSpec) -> GeneratedMatrix:
    rng = np.random.default_rng(spec.seed)
    n = spec.dim
    J = jordan_matrix(spec.blocks)
    T = _transform(n, spec.transform_cond, rng, spec.scramble)
    T_inv = np.linalg.inv(T)
    A = T @ J @ T_inv
    offsets = np.cumsum([0] + [d for _, d in spec.blocks])
    cols = [offsets[k] + spec.blocks[k][1] - 1 for k in spec.target_blocks]
    S = T[:, cols]
    S = S / np.linalg.norm(S, axis=0, keepdims=True)
    smax, smin = svd_extremes(T)
    kS_max, kS_min = svd_extremes(S)
    normA = spectral_norm(A)
    return GeneratedMatrix(
        A=complex_matrix(A),
        T=complex_matrix(T),
        J=complex_matrix(J),
        spec=spec,
        kappa_bar_witness=smax / smin,
        alpha=_round_up_2sig(normA),
        eigvec_columns=complex_matrix(S, square=False),
        kappa_S=kS_max / kS_min,
        T_inv=complex_matrix(T_inv),
    )


def validate_exclusion(eigenvalues, problem: str, eps_eig: float) -> bool:
    """True when no eigenvalue sits in the open exclusion zone of ``problem``.

    QEUE forbids ``1 < |z| < 1 + eps_eig``; QERE forbids ``0 < Im z < eps_eig``.
    ``eigenvalues`` may be a :class:`GeneratedMatrix` or an iterable.
    """
    if isinstance(eigenvalues, GeneratedMatrix):
        eigenvalues = eigenvalues.spec.eigenvalues
    for lam in eigenvalues:
        lam = complex(lam)
        if problem == QEUE:
            if 1.0 < abs(lam) < 1.0 + eps_eig:
                return False
        elif problem == QERE:
            if 0.0 < lam.imag < eps_eig:
                return False
        else:
            raise ValueError(f"unknown problem {problem!r}")
    return True


def input_state(gm: GeneratedMatrix, betas) -> tuple[np.ndarray, np.ndarray]:
    """Normalized ``sum_l beta_l s_l`` and the coefficients rescaled to match."""
    betas = np.asarray(betas, dtype=complex).reshape(-1)
    S = gm.eigvec_columns
    if betas.size != S.shape[1]:
        raise ValueError(f"expected {S.shape[1]} coefficients, got {betas.size}")
    psi = S @ betas
    nrm = np.linalg.norm(psi)
    if nrm < 1e-12:
        raise ZeroState("input state has norm below 1e-12")
    return psi / nrm, betas / nrm


def pt_symmetric_spec(pairs: Sequence[tuple[float, float]], transform_cond: float = 1.0, seed: int = 0) -> JordanSpec:
    """Jordan data of block-diagonal ``[[i g, s], [s, -i g]]`` toy Hamiltonians.

    Illustrative only.  Each block has eigenvalues ``+-sqrt(s^2 - g^2)``: real
    and distinct when ``s > g`` (unbroken phase), a defective zero at the
    exceptional point ``s = g``, and an imaginary pair beyond it.
    """
    blocks: list[tuple[complex, int]] = []
    for s, g in pairs:
        disc = s * s - g * g
        if abs(disc) < 1e-15:
            blocks.append((0j, 2))
        else:
            root = np.sqrt(complex(disc))
            blocks.extend([(root, 1), (-root, 1)])
    return JordanSpec(tuple(blocks), transform_cond, seed)


def pt_symmetric_matrix(pairs: Sequence[tuple[float, float]]) -> np.ndarray:
    n = 2 * len(pairs)
    H = np.zeros((n, n), dtype=complex)
    for k, (s, g) in enumerate(pairs):
        H[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[1j * g, s], [s, -1j * g]]
    return H
