"""Seeded experiment orchestration: grids of (instance x policy x repetition).

Every cell of a grid derives its generator streams from the root seed through
counter-mixed spawn keys, so runs are reproducible and cells are independent.
Within one (sweep value, repetition) cell all policies see the same instance,
offline log, candidate draws and reward noise, which pairs the comparisons.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import environments as env
from . import policies as pol
from .errors import ConfigError, EpisodeError, InvalidInputError
from .subspace import principal_angle_distance, projection_distance

THREADS_ENV_VAR = "ISD_BANDITS_THREADS"

# Stream tags mixed into spawn keys; distinct per purpose.
_STREAM_INSTANCE, _STREAM_LOG, _STREAM_ENV, _STREAM_POLICY = 0, 1, 2, 3

CSV_COLUMNS = ["experiment", "policy", "sweep_param", "sweep_value", "repetition",
               "t", "inst_regret", "cum_regret", "lambda0_hat", "delta_pi_hat",
               "beta_err", "coverage"]

POLICY_VARIANTS = ("linucb", "sw-linucb", "d-linucb", "random", "isd")


@dataclass(frozen=True)
class PolicySpec:
    """One policy column of a grid; unspecified knobs fall back to defaults."""

    variant: str
    id: str | None = None
    lam: float = 0.1
    eta: float | None = None          # None resolves to 1 / max(T, 2)
    sigma: float | None = None        # None resolves to the instance noise level
    window: int | None = None         # sliding-window length, None -> T
    discount: float = 0.999
    oracle: str = "none"
    m: int = 8
    coupling_tol: float | None = None
    invariance_tol: float | None = None
    delta_pi_const: float = 1.0
    recompute: bool = False
    freeze_basis: bool = False

    def __post_init__(self):
        if self.variant not in POLICY_VARIANTS:
            raise ConfigError(f"unknown policy variant {self.variant!r}")
        if self.variant == "isd" and self.oracle not in pol.ORACLE_TIERS:
            raise ConfigError(f"unknown oracle tier {self.oracle!r}")

    @property
    def policy_id(self) -> str:
        if self.id:
            return self.id
        if self.variant == "isd":
            return {"none": "isd-estimated", "subspaces": "isd-oracle-subspaces",
                    "subspaces_and_beta": "isd-oracle-all"}[self.oracle]
        return self.variant


@dataclass(frozen=True)
class InstanceSpec:
    p: int
    p_res: int
    K: int
    T0: int
    T: int
    noise_sigma: float = 1.0
    cov_cycles: float = 1.0

    def __post_init__(self):
        if not 1 <= self.p_res < self.p:
            raise ConfigError("need 1 <= p_res < p")
        if self.K < 2 or self.T0 < 1 or self.T < 0:
            raise ConfigError("need K >= 2, T0 >= 1 and T >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    instance: InstanceSpec
    policies: tuple
    n_repetitions: int = 20
    root_seed: int = 0
    sweep_param: str | None = None
    sweep_values: tuple = ()
    fixed_instance: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.n_repetitions < 1:
            raise ConfigError("n_repetitions must be >= 1")
        if not self.policies:
            raise ConfigError("at least one policy required")
        if self.sweep_param is not None:
            if self.sweep_param not in ("p", "p_res", "K", "T0", "T", "noise_sigma"):
                raise ConfigError(f"cannot sweep over {self.sweep_param!r}")
            if not self.sweep_values:
                raise ConfigError("sweep_values must be nonempty when sweep_param is set")
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))

    def cells(self):
        """Sweep points as (index, value, resolved instance spec)."""
        if self.sweep_param is None:
            return [(0, None, self.instance)]
        out = []
        for i, value in enumerate(self.sweep_values):
            coerced = float(value) if self.sweep_param == "noise_sigma" else int(value)
            spec = replace(self.instance, **{self.sweep_param: coerced})
            out.append((i, coerced, spec))
        return out


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Parse the harness JSON configuration document."""
    try:
        instance = InstanceSpec(**doc["instance"])
        policies = tuple(PolicySpec(**p) for p in doc["policies"])
        sweep = doc.get("sweep") or {}
        return ExperimentConfig(
            experiment=str(doc.get("experiment", "experiment")),
            instance=instance,
            policies=policies,
            n_repetitions=int(doc.get("n_repetitions", 20)),
            root_seed=int(doc.get("root_seed", 0)),
            sweep_param=sweep.get("param"),
            sweep_values=tuple(sweep.get("values", ())),
            fixed_instance=bool(doc.get("fixed_instance", False)),
            threads=doc.get("threads"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed experiment config: {exc}") from exc


def config_to_dict(config: ExperimentConfig) -> dict:
    doc = {
        "experiment": config.experiment,
        "instance": vars(config.instance).copy(),
        "policies": [vars(p).copy() for p in config.policies],
        "n_repetitions": config.n_repetitions,
        "root_seed": config.root_seed,
        "fixed_instance": config.fixed_instance,
        "threads": config.threads,
    }
    if config.sweep_param is not None:
        doc["sweep"] = {"param": config.sweep_param, "values": list(config.sweep_values)}
    return doc


@dataclass
class RegretTrace:
    """Per-round regret of one seeded episode plus offline-fit diagnostics."""

    policy_id: str
    repetition: int
    sweep_value: float | None
    inst_regret: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.inst_regret)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if len(self.inst_regret) else 0.0


@dataclass(frozen=True)
class CellFailure:
    sweep_value: float | None
    repetition: int
    policy_id: str
    message: str


@dataclass
class GridResult:
    config: ExperimentConfig
    traces: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def child_rng(root_seed: int, *key: int) -> np.random.Generator:
    """Generator derived from the root seed and a counter key, collision free."""
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=tuple(key)))


def resolve_eta(eta: float | None, T: int) -> float:
    return eta if eta is not None else 1.0 / max(T, 2)


def build_policy(spec: PolicySpec, instance, offline_log, T: int, policy_rng):
    """Instantiate one policy for an episode, fitting offline where needed."""
    eta = resolve_eta(spec.eta, T)
    sigma = spec.sigma if spec.sigma is not None else instance.noise_sigma
    common = dict(lam=spec.lam, eta=eta, sigma=sigma, L=instance.L, M=instance.M)
    if spec.variant == "linucb":
        return pol.LinUcb(instance.p, **common)
    if spec.variant == "sw-linucb":
        return pol.SlidingWindowLinUcb(instance.p, window=spec.window or T, **common)
    if spec.variant == "d-linucb":
        return pol.DiscountedLinUcb(instance.p, discount=spec.discount, **common)
    if spec.variant == "random":
        return pol.UniformRandomPolicy(policy_rng)
    params = pol.FitParams(lam=spec.lam, eta=eta, sigma=sigma, L=instance.L, M=instance.M,
                           m=spec.m, coupling_tol=spec.coupling_tol,
                           invariance_tol=spec.invariance_tol,
                           delta_pi_const=spec.delta_pi_const,
                           freeze_basis=spec.freeze_basis, recompute=spec.recompute)
    truth = (instance.basis, instance.beta_inv()) if spec.oracle != "none" else None
    return pol.fit_offline(offline_log, spec.oracle, truth, params, rng=policy_rng)


def subspace_estimation_error(policy, instance) -> float:
    """Principal-angle distance of the estimated rotation to the true split.

    Compares projectors of equal rank: the estimated invariant subspace is the
    span of the p_inv rotation columns best aligned with the truth, which
    isolates the finite-sample estimation error of the rotation from label
    selection mistakes (a separate error source with its own regret cost).
    """
    true_u_inv = instance.basis.u_inv
    if policy.rotation is None:
        return principal_angle_distance(policy.basis.u_inv, true_u_inv) \
            if policy.basis.p_inv == instance.p_inv \
            else projection_distance(policy.basis.u_inv, true_u_inv)
    alignment = np.linalg.norm(true_u_inv.T @ policy.rotation, axis=0)
    chosen = np.sort(np.argsort(alignment)[::-1][:instance.p_inv])
    return principal_angle_distance(policy.rotation[:, chosen], true_u_inv)


def isd_diagnostics(policy, instance) -> dict:
    """Offline-fit quality measures against the ground-truth instance."""
    if not isinstance(policy, pol.IsdLinUcb) or not isinstance(instance, env.SyntheticInstance):
        return {}
    return {
        "lambda0_hat": policy.lambda0_hat,
        "delta_pi_hat": subspace_estimation_error(policy, instance),
        "beta_err": float(np.linalg.norm(policy.beta_full - instance.beta_inv())),
        "coverage": policy.beta_coverage_event(instance.beta_inv()),
    }


def run_episode(instance, policy, T: int, rng, policy_id: str = "",
                repetition: int = 0, sweep_value=None, seed_label: str = "") -> RegretTrace:
    """Play T rounds: draw candidates, select, observe reward, update, score regret."""
    inst_regret = np.zeros(T)
    pending_features, pending_rewards = [], []
    diagnostics = isd_diagnostics(policy, instance)
    for t in range(1, T + 1):
        try:
            if isinstance(policy, pol.IsdLinUcb) and policy.recompute and pending_features:
                policy = pol.maybe_recompute(policy, (np.vstack(pending_features),
                                                      np.array(pending_rewards)))
                pending_features, pending_rewards = [], []
            candidates = env.draw_candidates(instance, t, rng)
            action = policy.select_action(candidates)
            chosen = candidates[action]
            observed = env.draw_reward(instance, t, chosen, rng)
            policy.update(chosen, observed)
            pending_features.append(chosen)
            pending_rewards.append(observed)
            inst_regret[t - 1] = env.instantaneous_regret(instance, t, chosen, candidates)
        except Exception as exc:
            raise EpisodeError(
                f"episode failed at t={t} (policy={policy_id or policy.label}, seed={seed_label})"
            ) from exc
    return RegretTrace(policy_id or policy.label, repetition, sweep_value,
                       inst_regret, diagnostics)


def _run_cell(config: ExperimentConfig, sweep_idx: int, sweep_value, spec: InstanceSpec,
              repetition: int):
    """All policies of one (sweep value, repetition) cell on a shared environment."""
    traces, failures = [], []
    instance_rep = 0 if config.fixed_instance else repetition
    instance = env.sample_instance(
        spec.p, spec.p_res, spec.K, spec.T0, spec.T, spec.noise_sigma,
        child_rng(config.root_seed, sweep_idx, instance_rep, _STREAM_INSTANCE),
        cov_cycles=spec.cov_cycles)
    offline_log = env.generate_offline_log(
        instance, child_rng(config.root_seed, sweep_idx, instance_rep, _STREAM_LOG))
    for policy_idx, policy_spec in enumerate(config.policies):
        seed_label = f"{config.root_seed}/{sweep_idx}/{repetition}"
        try:
            policy = build_policy(
                policy_spec, instance, offline_log, spec.T,
                child_rng(config.root_seed, sweep_idx, repetition, _STREAM_POLICY, policy_idx))
            trace = run_episode(
                instance, policy, spec.T,
                child_rng(config.root_seed, sweep_idx, repetition, _STREAM_ENV),
                policy_id=policy_spec.policy_id, repetition=repetition,
                sweep_value=sweep_value, seed_label=seed_label)
            traces.append(trace)
        except Exception as exc:
            failures.append(CellFailure(sweep_value, repetition, policy_spec.policy_id, str(exc)))
    return traces, failures


def resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    from_env = os.environ.get(THREADS_ENV_VAR)
    if from_env:
        return max(1, int(from_env))
    return 1


def run_grid(config: ExperimentConfig) -> GridResult:
    """Run the full cross product; failed cells are recorded, the grid continues."""
    cells = [(sweep_idx, sweep_value, spec, rep)
             for sweep_idx, sweep_value, spec in config.cells()
             for rep in range(config.n_repetitions)]
    threads = resolve_threads(config.threads)
    traces, failures = [], []
    if threads == 1:
        outcomes = [_run_cell(config, si, sv, spec, rep) for si, sv, spec, rep in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool_:
            futures = [pool_.submit(_run_cell, config, si, sv, spec, rep)
                       for si, sv, spec, rep in cells]
            outcomes = [f.result() for f in futures]
    for cell_traces, cell_failures in outcomes:
        traces.extend(cell_traces)
        failures.extend(cell_failures)
    return GridResult(config, traces, failures)


def trace_rows(result: GridResult):
    """Flatten traces into export records, one per (trace, round)."""
    sweep_param = result.config.sweep_param or ""
    for trace in result.traces:
        cum = trace.cum_regret
        diag = trace.diagnostics
        for t in range(len(trace.inst_regret)):
            yield {
                "experiment": result.config.experiment,
                "policy": trace.policy_id,
                "sweep_param": sweep_param,
                "sweep_value": trace.sweep_value,
                "repetition": trace.repetition,
                "t": t + 1,
                "inst_regret": float(trace.inst_regret[t]),
                "cum_regret": float(cum[t]),
                "lambda0_hat": diag.get("lambda0_hat"),
                "delta_pi_hat": diag.get("delta_pi_hat"),
                "beta_err": diag.get("beta_err"),
                "coverage": diag.get("coverage"),
            }


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def export(result: GridResult, path, fmt: str = "csv") -> int:
    """Write the result table; returns the number of data rows written."""
    rows = list(trace_rows(result))
    if not rows:
        raise InvalidInputError("nothing to export: the result table is empty")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in rows:
                writer.writerow([_format_value(row[c]) for c in CSV_COLUMNS])
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump({"records": rows}, fh, default=float)
    else:
        raise InvalidInputError(f"unknown export format {fmt!r}")
    return len(rows)


_NUMERIC_COLUMNS = ("sweep_value", "inst_regret", "cum_regret", "lambda0_hat",
                    "delta_pi_hat", "beta_err", "coverage")


def load_rows(path, fmt: str = "csv") -> list:
    """Read back an export; numeric fields become floats, blanks become None."""
    if fmt == "json":
        with open(path) as fh:
            return json.load(fh)["records"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise InvalidInputError(f"export is missing columns: {missing}")
        rows = []
        for raw in reader:
            row = dict(raw)
            row["repetition"] = int(raw["repetition"])
            row["t"] = int(raw["t"])
            for col in _NUMERIC_COLUMNS:
                row[col] = float(raw[col]) if raw[col] != "" else None
            rows.append(row)
        return rows


def aggregate(rows) -> list:
    """Mean and standard deviation of regret per (policy, sweep value, round)."""
    groups = {}
    for row in rows:
        key = (row["policy"], row["sweep_value"], row["t"])
        groups.setdefault(key, ([], []))
        groups[key][0].append(row["inst_regret"])
        groups[key][1].append(row["cum_regret"])
    out = []
    for (policy, sweep_value, t) in sorted(groups, key=lambda k: (k[0], _sort_key(k[1]), k[2])):
        inst, cum = groups[(policy, sweep_value, t)]
        inst = np.asarray(inst, dtype=float)
        cum = np.asarray(cum, dtype=float)
        out.append({
            "policy": policy,
            "sweep_value": sweep_value,
            "t": t,
            "n": len(inst),
            "mean_inst": float(np.mean(inst)),
            "std_inst": float(np.std(inst, ddof=1)) if len(inst) > 1 else 0.0,
            "mean_cum": float(np.mean(cum)),
            "std_cum": float(np.std(cum, ddof=1)) if len(cum) > 1 else 0.0,
        })
    return out


def _sort_key(value):
    return (0, 0.0) if value is None else (1, float(value))


def aggregate_result(result: GridResult) -> list:
    return aggregate(list(trace_rows(result)))


def final_regret_table(rows) -> dict:
    """(policy, sweep_value) -> list of per-repetition final cumulative regrets."""
    horizon = {}
    for row in rows:
        key = (row["policy"], row["sweep_value"], row["repetition"])
        if key not in horizon or row["t"] > horizon[key][0]:
            horizon[key] = (row["t"], row["cum_regret"])
    table = {}
    for (policy, sweep_value, _rep), (_t, final) in sorted(
            horizon.items(), key=lambda kv: (kv[0][0], _sort_key(kv[0][1]), kv[0][2])):
        table.setdefault((policy, sweep_value), []).append(final)
    return table
