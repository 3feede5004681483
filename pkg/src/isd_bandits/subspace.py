"""Invariant subspace estimation from windowed covariance matrices.

The estimation pipeline is: compute per-window feature covariances, find one
orthonormal matrix that (approximately) block diagonalizes all of them
simultaneously, then label each block as invariant or residual depending on
whether the reward regression coefficient in that block stays constant across
windows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidPartitionError, NumericalError

ORTHO_TOL = 1e-10

# Correlation-normalized off-diagonal coupling above which two eigendirections
# are merged into one block (used when no explicit coupling tolerance is
# supplied). With known per-window sample sizes the level is lifted to
# COUPLING_Z / sqrt(n_min), the scale of spurious sample correlations.
DEFAULT_RELATIVE_COUPLING = 0.05
COUPLING_Z = 5.0

# Multiplier on the pairwise coefficient standard error in the default
# invariance test. Calibrated so that an exactly invariant block is kept with
# per-block false-positive rate well below 1% at m = 8 windows.
INVARIANCE_Z = 4.0

# Power gate for the default invariance test: a block only counts as invariant
# when the tolerance could have detected a drift of this fraction of the
# typical per-coordinate coefficient magnitude. Blocks whose test is
# underpowered go to the residual side, where a wrong label costs exploration
# instead of a frozen wrong estimate.
POWER_GATE_FRACTION = 0.5


@dataclass(frozen=True)
class ISDBasis:
    """Orthonormal bases of complementary invariant and residual subspaces."""

    u_inv: np.ndarray
    u_res: np.ndarray

    def __post_init__(self):
        u_inv = np.atleast_2d(np.asarray(self.u_inv, dtype=float))
        u_res = np.atleast_2d(np.asarray(self.u_res, dtype=float))
        if u_inv.shape[0] != u_res.shape[0]:
            raise InvalidInputError("u_inv and u_res must have the same row dimension")
        object.__setattr__(self, "u_inv", u_inv)
        object.__setattr__(self, "u_res", u_res)
        p = u_res.shape[0]
        if self.p_res < 1:
            raise InvalidInputError("residual subspace must have dimension >= 1")
        if self.p_inv + self.p_res != p:
            raise InvalidInputError("subspace dimensions must sum to the ambient dimension")
        for name, u in (("u_inv", u_inv), ("u_res", u_res)):
            if u.shape[1] == 0:
                continue
            defect = np.max(np.abs(u.T @ u - np.eye(u.shape[1])))
            if defect > ORTHO_TOL:
                raise InvalidInputError(f"{name} columns are not orthonormal (defect {defect:.2e})")
        if self.p_inv > 0:
            cross = np.max(np.abs(u_inv.T @ u_res))
            if cross > ORTHO_TOL:
                raise InvalidInputError(f"u_inv and u_res are not orthogonal (defect {cross:.2e})")

    @property
    def p(self) -> int:
        return self.u_res.shape[0]

    @property
    def p_inv(self) -> int:
        return self.u_inv.shape[1]

    @property
    def p_res(self) -> int:
        return self.u_res.shape[1]

    def proj_inv(self) -> np.ndarray:
        return self.u_inv @ self.u_inv.T

    def proj_res(self) -> np.ndarray:
        return self.u_res @ self.u_res.T


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint column-index blocks covering [p], each labeled invariant or residual."""

    blocks: tuple
    labels: tuple
    diagnostics: tuple = field(default=())

    def __post_init__(self):
        blocks = tuple(tuple(int(j) for j in b) for b in self.blocks)
        labels = tuple(str(l) for l in self.labels)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))
        if len(blocks) != len(labels):
            raise InvalidInputError("one label per block required")
        if any(l not in ("invariant", "residual") for l in labels):
            raise InvalidInputError("labels must be 'invariant' or 'residual'")
        flat = [j for b in blocks for j in b]
        p = len(flat)
        if sorted(flat) != list(range(p)):
            raise InvalidInputError("blocks must disjointly cover all column indices")

    @property
    def p(self) -> int:
        return sum(len(b) for b in self.blocks)

    def indices(self, label: str) -> list:
        out = []
        for block, lab in zip(self.blocks, self.labels):
            if lab == label:
                out.extend(block)
        return out


def gram(features, reg: float, p: int | None = None) -> np.ndarray:
    """Regularized sum of feature outer products, reg * I + sum phi phi^T."""
    if reg < 0:
        raise InvalidInputError("reg must be nonnegative")
    rows = [np.asarray(f, dtype=float).ravel() for f in features]
    if not rows:
        if p is None:
            raise InvalidInputError("dimension p required for an empty feature sequence")
        return reg * np.eye(p)
    dim = rows[0].shape[0]
    if any(r.shape[0] != dim for r in rows):
        raise InvalidInputError("feature vectors have mismatched dimensions")
    if p is not None and p != dim:
        raise InvalidInputError(f"features have dimension {dim}, expected {p}")
    phi = np.vstack(rows)
    out = reg * np.eye(dim) + phi.T @ phi
    return 0.5 * (out + out.T)


def _connected_components(adjacency: np.ndarray) -> list:
    p = adjacency.shape[0]
    seen = np.zeros(p, dtype=bool)
    components = []
    for start in range(p):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            j = stack.pop()
            comp.append(j)
            for k in np.flatnonzero(adjacency[j]):
                if not seen[k]:
                    seen[k] = True
                    stack.append(int(k))
        components.append(sorted(comp))
    components.sort(key=lambda c: c[0])
    return components


JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def _jacobi_joint_diagonalize(mats: np.ndarray, u0: np.ndarray):
    """Orthogonal joint diagonalization by Jacobi rotations (Cardoso-Souloumiac).

    Minimizes the summed off-diagonal energy of all matrices at once; pairs
    that are near-degenerate in one matrix get resolved by the others.
    """
    d = np.array([u0.T @ c @ u0 for c in mats])
    u = u0.copy()
    p = u.shape[0]
    for _ in range(JACOBI_MAX_SWEEPS):
        biggest_sine = 0.0
        for j in range(p - 1):
            for k in range(j + 1, p):
                h1 = d[:, j, j] - d[:, k, k]
                h2 = d[:, j, k] + d[:, k, j]
                ton = float(h1 @ h1) - float(h2 @ h2)
                toff = 2.0 * float(h1 @ h2)
                theta = 0.5 * math.atan2(toff, ton + math.hypot(ton, toff))
                c = math.cos(theta)
                s = math.sin(theta)
                if abs(s) <= JACOBI_TOL:
                    continue
                biggest_sine = max(biggest_sine, abs(s))
                rot_j = c * d[:, :, j] + s * d[:, :, k]
                rot_k = -s * d[:, :, j] + c * d[:, :, k]
                d[:, :, j], d[:, :, k] = rot_j, rot_k
                rot_j = c * d[:, j, :] + s * d[:, k, :]
                rot_k = -s * d[:, j, :] + c * d[:, k, :]
                d[:, j, :], d[:, k, :] = rot_j, rot_k
                col_j = c * u[:, j] + s * u[:, k]
                col_k = -s * u[:, j] + c * u[:, k]
                u[:, j], u[:, k] = col_j, col_k
        if biggest_sine <= JACOBI_TOL:
            break
    return u


def joint_block_diagonalize(covs, coupling_tol: float | None = None, rng=None,
                            n_samples=None):
    """Find an orthonormal U rendering all covariance matrices block diagonal.

    Starts from the eigenbasis of a generic random convex combination of the
    inputs, refines it by Jacobi joint diagonalization across all matrices,
    then merges columns whose rotated off-diagonal coupling exceeds the
    tolerance. Connected components of the coupling graph are the blocks.
    Exactly commuting families are recovered exactly; noisy families yield the
    partition minimizing the coupling graph at the given tolerance.

    An explicit coupling_tol thresholds the absolute off-diagonal magnitude.
    Without one, couplings are correlation-normalized and compared against a
    scale-free level; n_samples (per-matrix observation counts) lifts that
    level to the magnitude of spurious sample correlations.

    Returns (U, blocks) with blocks a list of sorted column-index lists.
    """
    mats = [np.asarray(c, dtype=float) for c in covs]
    if len(mats) < 2:
        raise InvalidInputError("at least two covariance matrices required")
    p = mats[0].shape[0]
    for c in mats:
        if c.ndim != 2 or c.shape != (p, p):
            raise InvalidInputError("all covariance matrices must be square with equal dimension")
        scale = max(1.0, float(np.max(np.abs(c))))
        if np.max(np.abs(c - c.T)) > 1e-8 * scale:
            raise InvalidInputError("covariance matrices must be symmetric")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    weights = gen.uniform(0.5, 1.5, size=len(mats))
    weights /= weights.sum()
    mixture = sum(w * c for w, c in zip(weights, mats))
    mixture = 0.5 * (mixture + mixture.T)
    try:
        _, u0 = np.linalg.eigh(mixture)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition of the covariance mixture failed: {exc}") from exc
    u = _jacobi_joint_diagonalize(np.array(mats), u0)

    rotated = [u.T @ c @ u for c in mats]
    level = DEFAULT_RELATIVE_COUPLING
    if coupling_tol is None and n_samples is not None:
        level = max(level, COUPLING_Z / math.sqrt(max(1, min(n_samples))))
    coupled = np.zeros((p, p), dtype=bool)
    for d in rotated:
        off = np.abs(d)
        np.fill_diagonal(off, 0.0)
        if coupling_tol is None:
            diag = np.clip(np.diag(d), np.finfo(float).tiny, None)
            coupled |= off / np.sqrt(np.outer(diag, diag)) > level
        else:
            coupled |= off > coupling_tol
    blocks = _connected_components(coupled)
    return u, blocks


def _ols(z: np.ndarray, r: np.ndarray):
    """Least squares coefficients and the unnormalized Gram inverse, or None if singular."""
    g = z.T @ z
    try:
        g_inv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        return None
    if np.linalg.cond(g) > 1e12:
        return None
    return g_inv @ (z.T @ r), g_inv


def classify_blocks(blocks, u: np.ndarray, windows, invariance_tol: float | None = None) -> BlockPartition:
    """Label each block invariant or residual from per-window reward regressions.

    For every window the rewards are regressed on the rotated features and the
    coefficient subvector of each block is extracted; a block is invariant iff
    the maximum pairwise 2-norm distance between its m coefficient vectors
    stays below the tolerance. When no tolerance is given, a per-block default
    of INVARIANCE_Z * sigma_hat * sqrt(2 * max_w tr[(Z_w^T Z_w)^-1]_bb) is
    used, which tracks the sampling noise of the per-window coefficients
    including the conditioning of the window Grams.

    Blocks whose per-window regression is singular are labeled residual with a
    diagnostic. If everything comes out invariant, the block with the largest
    per-window coefficient variance is forced residual so a valid decomposition
    always exists.
    """
    u = np.asarray(u, dtype=float)
    p = u.shape[1]
    blocks = [sorted(int(j) for j in b) for b in blocks]
    flat = sorted(j for b in blocks for j in b)
    if flat != list(range(p)):
        raise InvalidInputError("blocks must partition the columns of U")
    if not windows:
        raise InvalidInputError("at least one window of observations required")
    largest = max(len(b) for b in blocks)
    data = []
    for phi, rewards in windows:
        phi = np.asarray(phi, dtype=float)
        rewards = np.asarray(rewards, dtype=float).ravel()
        if phi.ndim != 2 or phi.shape[1] != u.shape[0]:
            raise InvalidInputError("window features must be n x p")
        if phi.shape[0] != rewards.shape[0]:
            raise InvalidInputError("features and rewards disagree in length")
        if phi.shape[0] < largest:
            raise InvalidInputError("each window needs at least as many observations as the largest block")
        data.append((phi @ u, rewards))

    full_rank = all(z.shape[0] >= p for z, _ in data)
    diagnostics = []

    # Coefficients per window: either subvectors of the full regression or,
    # when windows are too short for that, per-block regressions.
    coefs = {}       # block index -> list of per-window coefficient vectors
    gram_traces = {} # block index -> list of per-window tr[(Z^T Z)^-1]_bb
    singular = set()
    residual_sq = 0.0
    residual_dof = 0
    for z, r in data:
        if full_rank:
            fit = _ols(z, r)
            if fit is None:
                singular.update(range(len(blocks)))
                diagnostics.append("singular full window Gram; all blocks labeled residual")
                continue
            c, g_inv = fit
            residual_sq += float(np.sum((r - z @ c) ** 2))
            residual_dof += max(z.shape[0] - p, 0)
            for bi, b in enumerate(blocks):
                coefs.setdefault(bi, []).append(c[b])
                gram_traces.setdefault(bi, []).append(float(np.trace(g_inv[np.ix_(b, b)])))
        else:
            for bi, b in enumerate(blocks):
                zb = z[:, b]
                fit = _ols(zb, r)
                if fit is None:
                    singular.add(bi)
                    diagnostics.append(f"singular window Gram for block {tuple(b)}; labeled residual")
                    continue
                c, g_inv = fit
                residual_sq += float(np.sum((r - zb @ c) ** 2))
                residual_dof += max(zb.shape[0] - len(b), 0)
                coefs.setdefault(bi, []).append(c)
                gram_traces.setdefault(bi, []).append(float(np.trace(g_inv)))

    sigma_hat = float(np.sqrt(residual_sq / residual_dof)) if residual_dof > 0 else 0.0

    coef_scales = {bi: float(np.linalg.norm(np.mean(np.vstack(v), axis=0)) / np.sqrt(len(blocks[bi])))
                   for bi, v in coefs.items()}
    anchor = float(np.median(list(coef_scales.values()))) if coef_scales else 0.0

    labels = []
    spreads = []
    for bi, b in enumerate(blocks):
        if bi in singular or bi not in coefs or len(coefs[bi]) < 2:
            labels.append("residual")
            spreads.append(np.inf)
            continue
        vecs = np.vstack(coefs[bi])
        dists = np.linalg.norm(vecs[:, None, :] - vecs[None, :, :], axis=2)
        max_dist = float(np.max(dists))
        spreads.append(float(np.mean(np.var(vecs, axis=0))))
        if invariance_tol is not None:
            labels.append("invariant" if max_dist <= invariance_tol else "residual")
            continue
        tol = INVARIANCE_Z * sigma_hat * np.sqrt(2.0 * max(gram_traces[bi]))
        per_coord_tol = tol / np.sqrt(len(b))
        powered = per_coord_tol <= POWER_GATE_FRACTION * max(coef_scales[bi], anchor)
        labels.append("invariant" if (max_dist <= tol and powered) else "residual")

    if all(l == "invariant" for l in labels):
        forced = int(np.argmax(spreads))
        labels[forced] = "residual"
        diagnostics.append(
            f"all blocks classified invariant; forcing block {tuple(blocks[forced])} residual"
        )
    return BlockPartition(tuple(map(tuple, blocks)), tuple(labels), tuple(diagnostics))


def assemble_basis(partition: BlockPartition, u: np.ndarray) -> ISDBasis:
    """Stack invariant-labeled block columns into u_inv and the rest into u_res."""
    u = np.asarray(u, dtype=float)
    if partition.p != u.shape[1]:
        raise InvalidInputError("partition does not cover the columns of U")
    res_idx = partition.indices("residual")
    if not res_idx:
        raise InvalidPartitionError("no residual block; a valid decomposition needs p_res >= 1")
    inv_idx = partition.indices("invariant")
    return ISDBasis(u[:, inv_idx], u[:, res_idx])


def principal_angle_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Largest sine of the principal angles between equal-dimension subspaces.

    Computed as sqrt(1 - sigma_min(A^T B)^2), which equals the operator norm
    of the difference of the orthogonal projectors onto the two spans.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise InvalidInputError("subspace bases must have equal shape")
    if a.shape[1] == 0:
        return 0.0
    for name, m in (("first", a), ("second", b)):
        defect = np.max(np.abs(m.T @ m - np.eye(m.shape[1])))
        if defect > 1e-8:
            raise InvalidInputError(f"{name} basis is not orthonormal (defect {defect:.2e})")
    sigma = np.linalg.svd(a.T @ b, compute_uv=False)
    smin = float(np.clip(sigma.min(), -1.0, 1.0))
    return float(np.sqrt(max(0.0, 1.0 - smin * smin)))


def projection_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Operator norm of the projector difference; bases may differ in width."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError("bases must share the ambient dimension")
    pa = a @ a.T if a.shape[1] else np.zeros((a.shape[0], a.shape[0]))
    pb = b @ b.T if b.shape[1] else np.zeros((b.shape[0], b.shape[0]))
    return float(np.linalg.norm(pa - pb, 2))
