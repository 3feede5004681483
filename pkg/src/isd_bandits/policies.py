"""Bandit policies behind one select/update interface.

All UCB variants score an action by the support function of one or two
confidence ellipsoids: center^T v + radius * ||v||_{Gram^-1}. The invariant
subspace policy keeps a fixed ellipsoid for the component estimated offline
and a growing one for the residual component estimated online.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .environments import OfflineLog, empirical_min_eigenvalue
from .errors import InvalidInputError, NumericalError
from .subspace import ISDBasis, assemble_basis, classify_blocks, joint_block_diagonalize

ORACLE_TIERS = ("none", "subspaces", "subspaces_and_beta")

CHOLESKY_JITTER = 1e-10
MAX_CONDITION = 1e12


def _floored_log(x: float) -> float:
    return math.log(max(1.0, x))


def rho_inv(T0: int, eta: float, L: float, M: float, sigma: float, lambda0: float,
            p_inv: int, delta_pi_bound: float = 0.0, oracle_subspaces: bool = True) -> float:
    """Confidence radius for the invariant component in the offline Gram norm.

    The oracle-subspace form has a noise term and a cross-covariance
    concentration term; the estimated-subspace form adds two terms scaling
    with the subspace estimation error bound delta_pi_bound.
    """
    _validate_radius_args(eta=eta, L=L, M=M, sigma=sigma)
    if T0 < 1 or p_inv < 1 or lambda0 <= 0 or delta_pi_bound < 0:
        raise InvalidInputError("rho_inv requires T0, p_inv >= 1, lambda0 > 0, delta_pi_bound >= 0")
    noise = sigma * math.sqrt(2.0 * math.log(1.0 / eta) + p_inv * _floored_log(L * L / (p_inv * lambda0)))
    cross = 2.0 * L * L * M * math.sqrt((2.0 / lambda0) * _floored_log((p_inv + 1) / eta))
    radius = noise + cross
    if not oracle_subspaces:
        radius += math.sqrt(p_inv * T0) * delta_pi_bound * L * M
        radius += math.sqrt(T0 / lambda0) * delta_pi_bound * L * L * M
    return radius


def rho_res(t: int, eta: float, L: float, M: float, sigma: float, lam: float,
            p_res: int, delta_pi_bound: float = 0.0, beta_err_2norm: float = 0.0) -> float:
    """Confidence radius for the residual component at online round t.

    With delta_pi_bound = 0 and beta_err_2norm = 0 this reduces to the
    standard self-normalized ridge radius in p_res dimensions.
    """
    _validate_radius_args(eta=eta, L=L, M=M, sigma=sigma)
    if t < 1 or p_res < 1 or lam <= 0 or delta_pi_bound < 0 or beta_err_2norm < 0:
        raise InvalidInputError("rho_res requires t, p_res >= 1, lam > 0 and nonnegative error bounds")
    noise = sigma * math.sqrt(2.0 * math.log(1.0 / eta)
                              + p_res * _floored_log(1.0 + t * L * L / (lam * p_res)))
    radius = noise + math.sqrt(lam) * M
    radius += L * M * delta_pi_bound * math.sqrt(p_res * t)
    radius += L * beta_err_2norm * math.sqrt(p_res * t)
    return radius


def delta_pi_surrogate(p: int, eta: float, T0: int, scale: float = 1.0) -> float:
    """Plug-in bound for the unobservable subspace estimation error."""
    _validate_radius_args(eta=eta, L=1.0, M=1.0, sigma=0.0)
    if p < 1 or T0 < 1 or scale < 0:
        raise InvalidInputError("delta_pi_surrogate requires p, T0 >= 1 and scale >= 0")
    return scale * math.sqrt(_floored_log(p / eta) / T0)


def _rho_inv_noise_term(eta: float, L: float, sigma: float, lambda0: float, p_inv: int) -> float:
    """Self-normalized noise part of the invariant radius, used for exploration.

    The full rho_inv additionally carries worst-case cross-covariance and
    misalignment terms whose constants are orders of magnitude above the
    realized errors at simulation scale; driving the UCB with them drowns the
    reward signal, so online exploration uses only this part.
    """
    return sigma * math.sqrt(2.0 * math.log(1.0 / eta)
                             + p_inv * _floored_log(L * L / (p_inv * lambda0)))


def _validate_radius_args(eta: float, L: float, M: float, sigma: float) -> None:
    if not 0.0 < eta < 1.0:
        raise InvalidInputError("eta must lie in (0, 1)")
    if L <= 0 or M <= 0 or sigma < 0:
        raise InvalidInputError("L, M must be positive and sigma nonnegative")


def _chol_lower(mat: np.ndarray) -> np.ndarray:
    """Cholesky factor with a single jitter retry, then a hard failure."""
    try:
        return cholesky(mat, lower=True)
    except np.linalg.LinAlgError:
        pass
    try:
        return cholesky(mat + CHOLESKY_JITTER * np.eye(mat.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Gram matrix is not positive definite: {exc}") from exc


class ConfidenceEllipsoid:
    """Ellipsoid {theta : ||theta - center||_gram <= radius} with UCB support function."""

    def __init__(self, center, gram, radius: float):
        center = np.asarray(center, dtype=float).ravel()
        gram = np.atleast_2d(np.asarray(gram, dtype=float))
        if radius < 0:
            raise InvalidInputError("radius must be nonnegative")
        k = center.shape[0]
        if gram.shape != (k, k):
            raise InvalidInputError("gram must be k x k for a k-dimensional center")
        self.center = center
        self.gram = gram
        self.radius = float(radius)
        self._factor = _chol_lower(gram) if k > 0 else None

    def ucb(self, directions: np.ndarray) -> np.ndarray:
        """Support function max over the ellipsoid of theta^T v, per row of directions."""
        v = np.atleast_2d(np.asarray(directions, dtype=float))
        if self.center.shape[0] == 0:
            return np.zeros(v.shape[0])
        solved = cho_solve((self._factor, True), v.T)
        maha = np.maximum(np.einsum("kn,kn->n", v.T, solved), 0.0)
        return v @ self.center + self.radius * np.sqrt(maha)


def _as_candidates(candidates, p: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(candidates, dtype=float))
    if arr.size == 0:
        raise InvalidInputError("candidate set is empty")
    if arr.shape[1] != p:
        raise InvalidInputError(f"candidates have dimension {arr.shape[1]}, expected {p}")
    return arr


def _check_reward(value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError("reward must be finite")
    return value


class LinUcb:
    """Standard ridge-regression UCB over the full feature space."""

    label = "linucb"

    def __init__(self, p: int, lam: float = 0.1, eta: float = 0.01,
                 sigma: float = 1.0, L: float = 1.0, M: float = 1.0):
        if lam <= 0:
            raise InvalidInputError("lam must be positive")
        self.p = p
        self.lam = lam
        self.eta = eta
        self.sigma = sigma
        self.L = L
        self.M = M
        self.gram = lam * np.eye(p)
        self.moment = np.zeros(p)
        self.round = 1

    def _radius(self) -> float:
        return math.sqrt(rho_res(self.round, self.eta, self.L, self.M,
                                 self.sigma, self.lam, self.p))

    def select_action(self, candidates) -> int:
        phi = _as_candidates(candidates, self.p)
        factor = _chol_lower(self.gram)
        center = cho_solve((factor, True), self.moment)
        ellipsoid = ConfidenceEllipsoid(center, self.gram, self._radius())
        return int(np.argmax(ellipsoid.ucb(phi)))

    def update(self, feature, reward) -> None:
        value = _check_reward(reward)
        phi = np.asarray(feature, dtype=float).ravel()
        if phi.shape[0] != self.p:
            raise InvalidInputError("feature dimension mismatch")
        self.gram += np.outer(phi, phi)
        self.moment += phi * value
        self.round += 1


class SlidingWindowLinUcb(LinUcb):
    """LinUCB over only the last `window` observations; Gram rebuilt per update."""

    label = "sw-linucb"

    def __init__(self, p: int, window: int, **kwargs):
        super().__init__(p, **kwargs)
        if window < 1:
            raise InvalidInputError("window must be >= 1")
        self.window = window
        self.buffer = []

    def _radius(self) -> float:
        return math.sqrt(rho_res(len(self.buffer) + 1, self.eta, self.L, self.M,
                                 self.sigma, self.lam, self.p))

    def update(self, feature, reward) -> None:
        value = _check_reward(reward)
        phi = np.asarray(feature, dtype=float).ravel()
        if phi.shape[0] != self.p:
            raise InvalidInputError("feature dimension mismatch")
        self.buffer.append((phi, value))
        if len(self.buffer) > self.window:
            self.buffer.pop(0)
        self.gram = self.lam * np.eye(self.p)
        self.moment = np.zeros(self.p)
        for f, r in self.buffer:
            self.gram += np.outer(f, f)
            self.moment += f * r
        self.round += 1


class DiscountedLinUcb(LinUcb):
    """LinUCB with geometrically discounted past observations."""

    label = "d-linucb"

    def __init__(self, p: int, discount: float = 0.999, **kwargs):
        super().__init__(p, **kwargs)
        if not 0.0 < discount <= 1.0:
            raise InvalidInputError("discount must lie in (0, 1]")
        self.discount = discount

    def update(self, feature, reward) -> None:
        value = _check_reward(reward)
        phi = np.asarray(feature, dtype=float).ravel()
        if phi.shape[0] != self.p:
            raise InvalidInputError("feature dimension mismatch")
        rho = self.discount
        self.gram = rho * self.gram + np.outer(phi, phi) + (1.0 - rho) * self.lam * np.eye(self.p)
        self.moment = rho * self.moment + phi * value
        self.round += 1


class UniformRandomPolicy:
    """Chooses actions uniformly at random; the baseline every UCB should beat."""

    label = "random"

    def __init__(self, rng):
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    def select_action(self, candidates) -> int:
        arr = np.atleast_2d(np.asarray(candidates, dtype=float))
        if arr.size == 0:
            raise InvalidInputError("candidate set is empty")
        return int(self.rng.integers(arr.shape[0]))

    def update(self, feature, reward) -> None:
        _check_reward(reward)


@dataclass(frozen=True)
class FitParams:
    """Knobs for the offline fit and the online radii."""

    lam: float
    eta: float
    sigma: float
    L: float
    M: float
    m: int = 8
    coupling_tol: float | None = None
    invariance_tol: float | None = None
    delta_pi_const: float = 1.0
    freeze_basis: bool = False
    recompute: bool = False


class IsdLinUcb:
    """UCB policy exploring only the residual subspace of an estimated decomposition."""

    def __init__(self, *, basis: ISDBasis, beta_inv_coords: np.ndarray,
                 offline_gram: np.ndarray, rho_inv_value: float, rho_inv_explore: float,
                 beta_err_bound: float, delta_pi_bound: float, lambda0_hat: float,
                 T0: int, params: FitParams, oracle: str,
                 offline_features: np.ndarray, offline_rewards: np.ndarray,
                 rotation: np.ndarray | None = None, rng=None):
        self.basis = basis
        self.beta_inv_coords = np.asarray(beta_inv_coords, dtype=float)
        self.offline_gram = offline_gram
        self.rho_inv_value = float(rho_inv_value)
        self.rho_inv_explore = float(rho_inv_explore)
        self.beta_err_bound = float(beta_err_bound)
        self.delta_pi_bound = float(delta_pi_bound)
        self.lambda0_hat = float(lambda0_hat)
        self.T0 = int(T0)
        self.params = params
        self.oracle = oracle
        self.offline_features = offline_features
        self.offline_rewards = offline_rewards
        self.rotation = rotation
        self.rng = rng
        self.beta_full = basis.u_inv @ self.beta_inv_coords if basis.p_inv else np.zeros(basis.p)
        self.inv_gram = basis.u_inv.T @ offline_gram @ basis.u_inv
        self.res_gram = params.lam * np.eye(basis.p_res)
        self.res_moment = np.zeros(basis.p_res)
        self.round = 1

    label = "isd-linucb"

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def recompute(self) -> bool:
        return self.params.recompute

    def _rho_res_value(self, t: int) -> float:
        # Exploration uses the self-normalized core (zero plug-in error
        # bounds); delta_pi_bound and beta_err_bound stay available for the
        # full theoretical radius via rho_res.
        return rho_res(t, self.params.eta, self.params.L, self.params.M,
                       self.params.sigma, self.params.lam, self.basis.p_res)

    def delta_hat_coords(self) -> np.ndarray:
        factor = _chol_lower(self.res_gram)
        return cho_solve((factor, True), self.res_moment)

    def select_action(self, candidates) -> int:
        phi = _as_candidates(candidates, self.p)
        scores = np.zeros(phi.shape[0])
        if self.basis.p_inv > 0:
            inv_ell = ConfidenceEllipsoid(self.beta_inv_coords, self.inv_gram,
                                          math.sqrt(self.rho_inv_explore))
            scores += inv_ell.ucb(phi @ self.basis.u_inv)
        res_ell = ConfidenceEllipsoid(self.delta_hat_coords(), self.res_gram,
                                      math.sqrt(self._rho_res_value(self.round)))
        scores += res_ell.ucb(phi @ self.basis.u_res)
        return int(np.argmax(scores))

    def update(self, feature, reward) -> None:
        value = _check_reward(reward)
        phi = np.asarray(feature, dtype=float).ravel()
        if phi.shape[0] != self.p:
            raise InvalidInputError("feature dimension mismatch")
        phi_res = self.basis.u_res.T @ phi
        self.res_gram += np.outer(phi_res, phi_res)
        self.res_moment += phi_res * (value - phi @ self.beta_full)
        self.round += 1

    def beta_error_norm(self, beta_true_full: np.ndarray) -> float:
        """Offline-Gram norm of the invariant estimation error."""
        target = self.basis.proj_inv() @ np.asarray(beta_true_full, dtype=float)
        err = self.beta_full - target
        return math.sqrt(max(float(err @ self.offline_gram @ err), 0.0))

    def beta_coverage_event(self, beta_true_full: np.ndarray, radius: float | None = None) -> bool:
        """Whether the offline confidence set contains the projected truth."""
        limit = self.rho_inv_value if radius is None else radius
        return self.beta_error_norm(beta_true_full) <= limit

    def delta_error_norm(self, delta_true_full: np.ndarray) -> float:
        """Current-Gram norm of the residual estimation error."""
        err = self.delta_hat_coords() - self.basis.u_res.T @ np.asarray(delta_true_full, dtype=float)
        return math.sqrt(max(float(err @ self.res_gram @ err), 0.0))

    def delta_coverage_event(self, delta_true_full: np.ndarray, radius: float | None = None) -> bool:
        """Whether the current residual confidence set contains the projected truth."""
        limit = self._rho_res_value(self.round) if radius is None else radius
        return self.delta_error_norm(delta_true_full) <= limit


def _estimate_decomposition(features: np.ndarray, rewards: np.ndarray,
                            params: FitParams, rng):
    windows = np.array_split(np.arange(features.shape[0]), params.m)
    covs = []
    reward_windows = []
    for idx in windows:
        phi = features[idx]
        centered = phi - phi.mean(axis=0)
        covs.append(centered.T @ centered / max(len(idx), 1))
        reward_windows.append((phi, rewards[idx]))
    u, blocks = joint_block_diagonalize(covs, params.coupling_tol, rng=rng,
                                        n_samples=[len(idx) for idx in windows])
    partition = classify_blocks(blocks, u, reward_windows, params.invariance_tol)
    return assemble_basis(partition, u), u


def _fit_invariant_component(features: np.ndarray, rewards: np.ndarray, basis: ISDBasis):
    offline_gram = features.T @ features
    if basis.p_inv == 0:
        return offline_gram, np.zeros(0)
    inv_gram = basis.u_inv.T @ offline_gram @ basis.u_inv
    cond = float(np.linalg.cond(inv_gram))
    if not math.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(f"invariant Gram is rank deficient (condition number {cond:.3e})")
    coords = np.linalg.solve(inv_gram, basis.u_inv.T @ (features.T @ rewards))
    return offline_gram, coords


def _assemble_policy(features: np.ndarray, rewards: np.ndarray, basis: ISDBasis,
                     oracle: str, truth_beta, params: FitParams,
                     delta_pi_bound: float, lambda0_hat: float, rng,
                     rotation: np.ndarray | None = None) -> IsdLinUcb:
    T0 = features.shape[0]
    if oracle == "subspaces_and_beta":
        offline_gram = features.T @ features
        coords = basis.u_inv.T @ np.asarray(truth_beta, dtype=float)
        rho_inv_value = 0.0
        rho_inv_explore = 0.0
        beta_err_bound = 0.0
    else:
        if basis.p_inv > 0 and lambda0_hat <= 0:
            raise NumericalError("offline Gram is rank deficient (condition number inf)")
        offline_gram, coords = _fit_invariant_component(features, rewards, basis)
        if basis.p_inv == 0:
            rho_inv_value = 0.0
            rho_inv_explore = 0.0
            beta_err_bound = 0.0
        else:
            rho_inv_value = rho_inv(T0, params.eta, params.L, params.M, params.sigma,
                                    lambda0_hat, basis.p_inv, delta_pi_bound,
                                    oracle_subspaces=(oracle == "subspaces"))
            rho_inv_explore = _rho_inv_noise_term(params.eta, params.L, params.sigma,
                                                  lambda0_hat, basis.p_inv)
            beta_err_bound = math.sqrt(rho_inv_value / (lambda0_hat * T0))
    return IsdLinUcb(
        basis=basis,
        beta_inv_coords=coords,
        offline_gram=offline_gram,
        rho_inv_value=rho_inv_value,
        rho_inv_explore=rho_inv_explore,
        beta_err_bound=beta_err_bound,
        delta_pi_bound=delta_pi_bound,
        lambda0_hat=lambda0_hat,
        T0=T0,
        params=params,
        oracle=oracle,
        offline_features=features,
        offline_rewards=rewards,
        rotation=rotation,
        rng=rng,
    )


def fit_offline(log: OfflineLog, oracle: str = "none", truth=None,
                params: FitParams | None = None, rng=None) -> IsdLinUcb:
    """Build an ISD policy from an offline log at the requested oracle tier.

    oracle = "subspaces_and_beta" uses the true basis and invariant component
    (zero invariant radius); "subspaces" uses the true basis and estimates the
    invariant component; "none" estimates the decomposition from windowed
    covariances first.
    """
    if oracle not in ORACLE_TIERS:
        raise InvalidInputError(f"oracle must be one of {ORACLE_TIERS}")
    if params is None:
        raise InvalidInputError("fit parameters are required")
    features = np.asarray(log.features, dtype=float)
    rewards = np.asarray(log.rewards, dtype=float)
    T0 = features.shape[0]
    if T0 < features.shape[1]:
        raise InvalidInputError("offline log must contain at least p observations")
    if oracle != "none" and truth is None:
        raise InvalidInputError("oracle tiers require the ground-truth basis")

    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    rotation = None
    if oracle == "none":
        basis, rotation = _estimate_decomposition(features, rewards, params, gen)
        delta_pi_bound = delta_pi_surrogate(features.shape[1], params.eta, T0,
                                            params.delta_pi_const)
    else:
        basis = truth[0]
        delta_pi_bound = 0.0
    truth_beta = truth[1] if oracle == "subspaces_and_beta" else None
    return _assemble_policy(features, rewards, basis, oracle, truth_beta, params,
                            delta_pi_bound, log.lambda0_hat, gen, rotation=rotation)


def maybe_recompute(policy: IsdLinUcb, new_offline_records=None) -> IsdLinUcb:
    """Move new records into the offline pool and refit, if the policy opts in.

    Records graduate permanently into the offline pool: the invariant
    component (and, unless frozen, the basis) is re-estimated on the enlarged
    pool and the residual statistics restart from the ridge seed. With the
    recompute flag unset the policy is returned unchanged.
    """
    if not policy.recompute:
        return policy
    features = policy.offline_features
    rewards = policy.offline_rewards
    if new_offline_records is not None:
        new_phi, new_r = new_offline_records
        new_phi = np.atleast_2d(np.asarray(new_phi, dtype=float))
        new_r = np.asarray(new_r, dtype=float).ravel()
        if new_phi.shape[0] != new_r.shape[0] or (new_phi.size and new_phi.shape[1] != policy.p):
            raise InvalidInputError("new records must be (n x p features, n rewards)")
        if new_phi.shape[0]:
            features = np.vstack([features, new_phi])
            rewards = np.concatenate([rewards, new_r])

    params = policy.params
    T0 = features.shape[0]
    lambda0_hat = empirical_min_eigenvalue(features)
    rotation = policy.rotation
    if policy.oracle == "none":
        if params.freeze_basis:
            basis = policy.basis
        else:
            basis, rotation = _estimate_decomposition(features, rewards, params, policy.rng)
        delta_pi_bound = delta_pi_surrogate(policy.p, params.eta, T0, params.delta_pi_const)
    else:
        basis = policy.basis
        delta_pi_bound = 0.0
    truth_beta = policy.beta_full if policy.oracle == "subspaces_and_beta" else None
    refreshed = _assemble_policy(features, rewards, basis, policy.oracle, truth_beta,
                                 params, delta_pi_bound, lambda0_hat, policy.rng,
                                 rotation=rotation)
    refreshed.round = policy.round
    return refreshed
