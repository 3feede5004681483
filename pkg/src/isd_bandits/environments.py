"""Synthetic bandit environments with time-varying linear reward models.

The main generator produces instances whose reward parameter splits into a
constant component supported on one subspace and a drifting component on the
complementary one, with feature covariances block diagonal in the same basis.
Offline rounds are indexed t in {-T0, ..., -1} (position s = t + T0 + 1 in
1..T0 for the drift formulas); online rounds are t in {1, ..., T} with a
constant parameter.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .subspace import ISDBasis

COORD_LOW, COORD_HIGH = 0.5, 1.5
FEATURE_NORM_MARGIN = 1.05


@dataclass(frozen=True)
class SyntheticInstance:
    """Fully specified generative model for one simulated bandit problem."""

    basis: ISDBasis
    beta_inv_coords: np.ndarray            # (p_inv,)
    delta_res_coords_offline: np.ndarray   # (T0, p_res), row s-1 is position s
    delta_res_coords_online: np.ndarray    # (p_res,), constant over [T]
    v_inv: np.ndarray                      # fixed invariant-block spectrum
    v_res: np.ndarray                      # base residual-block spectrum
    cov_cycles: float                      # offline residual-spectrum modulation cycles
    noise_sigma: float
    n_actions: int
    T0: int
    T: int
    L: float
    M: float

    @property
    def p(self) -> int:
        return self.basis.p

    @property
    def p_inv(self) -> int:
        return self.basis.p_inv

    @property
    def p_res(self) -> int:
        return self.basis.p_res

    def beta_inv(self) -> np.ndarray:
        """Invariant component as a full p-vector."""
        return self.basis.u_inv @ self.beta_inv_coords

    def delta_res(self, t: int) -> np.ndarray:
        """Residual component as a full p-vector at round t."""
        return self.basis.u_res @ self._delta_coords(t)

    def _delta_coords(self, t: int) -> np.ndarray:
        if 1 <= t <= self.T:
            return self.delta_res_coords_online
        if -self.T0 <= t <= -1:
            return self.delta_res_coords_offline[t + self.T0]
        raise InvalidInputError(f"round index {t} outside [-T0] and [T]")

    def gamma(self, t: int) -> np.ndarray:
        """Reward parameter beta_inv + delta_res_t at round t."""
        return self.beta_inv() + self.delta_res(t)

    def cov_spectrum(self, t: int) -> np.ndarray:
        """Diagonal of the block covariance in basis coordinates at round t."""
        if 1 <= t <= self.T:
            scale = np.ones(self.p_res)
        elif -self.T0 <= t <= -1:
            s = t + self.T0 + 1
            scale = _residual_cov_scale(np.array([float(s)]), self.T0,
                                        self.p_res, self.cov_cycles)[0]
        else:
            raise InvalidInputError(f"round index {t} outside [-T0] and [T]")
        return np.concatenate([self.v_inv, self.v_res * scale])


def _offline_drift(T0: int, p_res: int) -> np.ndarray:
    """Drift added to the residual coordinates at offline positions 1..T0."""
    s = np.arange(1, T0 + 1, dtype=float)[:, None]
    i = np.arange(1, p_res + 1, dtype=float)[None, :]
    return -1.5 * (s / T0) * np.sin(0.25 * i * s / T0 + i) ** 2


def _residual_cov_scale(s: np.ndarray, T0: int, p_res: int, cycles: float) -> np.ndarray:
    """Per-coordinate modulation of the residual spectrum at positions s.

    One slow cycle (by default) across the offline horizon with a distinct
    phase per coordinate, so per-window covariances differ between windows;
    that variation is what lets the block diagonalizer tell residual
    directions apart from invariant ones.
    """
    i = np.arange(1, p_res + 1, dtype=float)[None, :]
    return 1.0 + 0.5 * np.sin(2.0 * np.pi * s[:, None] * cycles / T0 + i)


def sample_instance(p: int, p_res: int, K: int, T0: int, T: int,
                    noise_sigma: float, rng, cov_cycles: float = 1.0) -> SyntheticInstance:
    """Draw a random instance: random basis, uniform coordinates, drifting residual."""
    if not 1 <= p_res < p:
        raise InvalidInputError("need 1 <= p_res < p")
    if K < 2 or T0 < 1 or T < 1:
        raise InvalidInputError("need K >= 2 and T0, T >= 1")
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be nonnegative")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p_inv = p - p_res

    q, r = np.linalg.qr(gen.standard_normal((p, p)))
    q = q * np.sign(np.diag(r))          # fix column signs for reproducibility
    basis = ISDBasis(q[:, :p_inv], q[:, p_inv:])

    beta_coords = gen.uniform(COORD_LOW, COORD_HIGH, size=p_inv)
    delta_init = gen.uniform(COORD_LOW, COORD_HIGH, size=p_res)
    delta_offline = delta_init[None, :] + _offline_drift(T0, p_res)
    delta_online = gen.uniform(COORD_LOW, COORD_HIGH, size=p_res)

    v_inv = gen.uniform(COORD_LOW, COORD_HIGH, size=p_inv)
    v_res = gen.uniform(COORD_LOW, COORD_HIGH, size=p_res)

    gammas = np.concatenate([np.tile(beta_coords, (T0 + 1, 1)),
                             np.vstack([delta_offline, delta_online])], axis=1)
    m_bound = float(np.max(np.linalg.norm(gammas, axis=1)))

    # Preview draw of the offline feature law to fix the norm bound L up front;
    # all later draws are clipped at L, so the bound stays valid by fiat.
    s = np.arange(1, T0 + 1, dtype=float)
    scale = _residual_cov_scale(s, T0, p_res, cov_cycles)
    spectra = np.concatenate([np.tile(v_inv, (T0, 1)), v_res[None, :] * scale], axis=1)
    z = gen.standard_normal((T0, K, p))
    sq_norms = np.einsum("tkp,tp->tk", z ** 2, spectra)
    l_bound = FEATURE_NORM_MARGIN * float(np.sqrt(np.max(sq_norms)))

    return SyntheticInstance(
        basis=basis,
        beta_inv_coords=beta_coords,
        delta_res_coords_offline=delta_offline,
        delta_res_coords_online=delta_online,
        v_inv=v_inv,
        v_res=v_res,
        cov_cycles=cov_cycles,
        noise_sigma=float(noise_sigma),
        n_actions=K,
        T0=T0,
        T=T,
        L=l_bound,
        M=m_bound,
    )


def _clip_norms(features: np.ndarray, limit: float):
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    over = norms > limit
    if np.any(over):
        features = np.where(over, features * (limit / norms), features)
    return features, int(np.count_nonzero(over))


def features_at(instance: SyntheticInstance, t: int, rng, return_clip_count: bool = False):
    """Draw the K candidate feature vectors for round t, clipped to norm L."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    spectrum = instance.cov_spectrum(t)
    z = gen.standard_normal((instance.n_actions, instance.p))
    coords = z * np.sqrt(spectrum)
    u = np.concatenate([instance.basis.u_inv, instance.basis.u_res], axis=1)
    phi = coords @ u.T
    phi, clipped = _clip_norms(phi, instance.L)
    if return_clip_count:
        return phi, clipped
    return phi


def reward(instance: SyntheticInstance, t: int, feature: np.ndarray, rng) -> float:
    """Noisy reward phi^T gamma_t + N(0, sigma^2)."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mean = float(np.asarray(feature, dtype=float) @ instance.gamma(t))
    return mean + instance.noise_sigma * float(gen.standard_normal())


def instantaneous_regret(instance, t: int, chosen_features, all_features) -> float:
    """Expected regret of the chosen action against the per-round optimum."""
    cands = np.atleast_2d(np.asarray(all_features, dtype=float))
    chosen = np.asarray(chosen_features, dtype=float).ravel()
    matches = np.flatnonzero(np.all(np.isclose(cands, chosen, rtol=0, atol=1e-12), axis=1))
    if matches.size == 0:
        raise InvalidInputError("chosen feature vector is not among the candidates")
    values = cands @ instance.gamma(t)
    return float(np.max(values) - values[matches[0]])


@dataclass(frozen=True)
class OfflineLog:
    """T0 offline observations (feature, action, reward), t in {-T0, ..., -1}."""

    features: np.ndarray   # (T0, p)
    actions: np.ndarray    # (T0,), values in 1..K
    rewards: np.ndarray    # (T0,)
    lambda0_hat: float     # min eigenvalue of (1/T0) sum phi phi^T

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def t_index(self) -> np.ndarray:
        return np.arange(-len(self), 0)

    @property
    def rank_deficient(self) -> bool:
        return self.lambda0_hat <= 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "action", "reward"] + [f"f_{j}" for j in range(1, self.p + 1)])
            for t, a, r, phi in zip(self.t_index, self.actions, self.rewards, self.features):
                writer.writerow([int(t), int(a), f"{r:.17g}"] + [f"{x:.17g}" for x in phi])

    @classmethod
    def from_csv(cls, path) -> "OfflineLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:3] != ["t", "action", "reward"]:
                raise InvalidInputError("offline log CSV must start with columns t, action, reward")
            rows = list(reader)
        actions = np.array([int(r[1]) for r in rows])
        rewards = np.array([float(r[2]) for r in rows])
        feats = np.array([[float(x) for x in r[3:]] for r in rows])
        return cls(feats, actions, rewards, empirical_min_eigenvalue(feats))


def empirical_min_eigenvalue(features: np.ndarray) -> float:
    """Minimum eigenvalue of the per-sample normalized Gram (Assumption 2 check)."""
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    n = feats.shape[0]
    if n == 0:
        return 0.0
    eig = np.linalg.eigvalsh(feats.T @ feats / n)
    return float(max(eig.min(), 0.0) if feats.shape[1] <= n else 0.0)


def generate_offline_log(instance: SyntheticInstance, rng) -> OfflineLog:
    """Simulate the offline phase under a uniformly random action policy."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    T0, K, p = instance.T0, instance.n_actions, instance.p
    s = np.arange(1, T0 + 1, dtype=float)
    scale = _residual_cov_scale(s, T0, instance.p_res, instance.cov_cycles)
    spectra = np.concatenate([np.tile(instance.v_inv, (T0, 1)),
                              instance.v_res[None, :] * scale], axis=1)
    z = gen.standard_normal((T0, K, p))
    coords = z * np.sqrt(spectra)[:, None, :]
    u = np.concatenate([instance.basis.u_inv, instance.basis.u_res], axis=1)
    phi = coords @ u.T
    phi, _ = _clip_norms(phi, instance.L)
    actions = gen.integers(1, K + 1, size=T0)
    chosen = phi[np.arange(T0), actions - 1]
    gammas = (np.tile(instance.beta_inv(), (T0, 1))
              + instance.delta_res_coords_offline @ instance.basis.u_res.T)
    means = np.einsum("tp,tp->t", chosen, gammas)
    noise = instance.noise_sigma * gen.standard_normal(T0)
    return OfflineLog(chosen, actions, means + noise, empirical_min_eigenvalue(chosen))


@dataclass(frozen=True)
class HypercubeInstance:
    """Adversarial stationary instance on the [-1, 1]^p hypercube."""

    gamma_vec: np.ndarray   # (p,), entries +-1/sqrt(T)
    T: int
    noise_sigma: float = 1.0

    @property
    def p(self) -> int:
        return self.gamma_vec.shape[0]

    @property
    def L(self) -> float:
        return float(np.sqrt(self.p))

    @property
    def M(self) -> float:
        return float(np.linalg.norm(self.gamma_vec))

    @property
    def n_actions(self) -> int:
        return 2 ** self.p if self.p <= 10 else 2 * self.p

    def gamma(self, t: int) -> np.ndarray:
        return self.gamma_vec

    def optimal_reward(self) -> float:
        """max over corners of phi^T gamma, attained at the sign-matching corner."""
        return float(np.sum(np.abs(self.gamma_vec)))


def hypercube_worst_case(p: int, T: int, rng) -> HypercubeInstance:
    """Sample a lower-bound instance with gamma uniform on {+-1/sqrt(T)}^p."""
    if p < 1 or T < 1:
        raise InvalidInputError("need p, T >= 1")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    signs = gen.integers(0, 2, size=p) * 2 - 1
    return HypercubeInstance(signs / np.sqrt(T), T)


def _hypercube_corners(p: int) -> np.ndarray:
    grid = np.indices((2,) * p).reshape(p, -1).T
    return grid * 2.0 - 1.0


def hypercube_candidates(instance: HypercubeInstance, t: int, rng) -> np.ndarray:
    """Action features for round t: all corners, or 2p axis-pinned corners for large p."""
    if instance.p <= 10:
        return _hypercube_corners(instance.p)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    corners = gen.integers(0, 2, size=(2 * instance.p, instance.p)) * 2.0 - 1.0
    for i in range(instance.p):
        corners[2 * i, i] = 1.0
        corners[2 * i + 1, i] = -1.0
    return corners


def draw_candidates(instance, t: int, rng) -> np.ndarray:
    """Per-round candidate features for either environment type."""
    if isinstance(instance, SyntheticInstance):
        return features_at(instance, t, rng)
    if isinstance(instance, HypercubeInstance):
        return hypercube_candidates(instance, t, rng)
    raise InvalidInputError(f"unsupported instance type {type(instance).__name__}")


def draw_reward(instance, t: int, feature, rng) -> float:
    if isinstance(instance, SyntheticInstance):
        return reward(instance, t, feature, rng)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mean = float(np.asarray(feature, dtype=float) @ instance.gamma(t))
    return mean + instance.noise_sigma * float(gen.standard_normal())


def instance_config_to_json(config: dict) -> str:
    """Serialize an instance configuration (dimensions, seed, noise, horizons)."""
    keys = {"p", "p_res", "K", "T0", "T", "noise_sigma", "seed", "cov_cycles"}
    unknown = set(config) - keys
    if unknown:
        raise InvalidInputError(f"unknown instance config keys: {sorted(unknown)}")
    return json.dumps(config, sort_keys=True)


def instance_config_from_json(doc: str) -> dict:
    config = json.loads(doc)
    if not isinstance(config, dict):
        raise InvalidInputError("instance config must be a JSON object")
    return config
