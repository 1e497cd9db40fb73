"""Compact chance-constrained DC-OPF data built from a grid and a scenario.

Decision vector ``x = [p_1..p_G, alpha_1..alpha_G]`` (MW dispatch, then
participation factors). Renewable deviations ``omega ~ N(0, Sigma)`` (per
unit of ``base_mva``) are balanced by the generators in proportion to
``alpha``. Each chance row ``k`` then reads::

    Pr{ wbar_k'x + (M_k x + m_k)'omega <= d_k } >= beta_k

with the Gaussian reformulation ``wbar_k'x + phi_k * ||Sigma^(1/2)(M_k x + m_k)|| <= d_k``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .mpcase import NetworkCase, load_case

log = logging.getLogger(__name__)


class StructuralError(ValueError):
    """The network cannot support a DC power flow (e.g. disconnected)."""


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    load_scale: float
    flow_limit_fraction: float
    renewable_buses: tuple[int, ...]
    stub_flow_limit_fraction: float | None = None
    renewable_forecast_mw: tuple[float, ...] | None = None
    sigma_diag: float = 0.1
    sigma_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "renewable_buses", tuple(int(b) for b in self.renewable_buses))
        if self.stub_flow_limit_fraction is None:
            object.__setattr__(self, "stub_flow_limit_fraction", self.flow_limit_fraction)
        if self.renewable_forecast_mw is None:
            object.__setattr__(self, "renewable_forecast_mw", (0.0,) * len(self.renewable_buses))
        else:
            object.__setattr__(self, "renewable_forecast_mw", tuple(float(v) for v in self.renewable_forecast_mw))
        if not self.load_scale > 0:
            raise ScenarioError("load_scale must be positive")
        if not (self.flow_limit_fraction > 0 and self.stub_flow_limit_fraction > 0):
            raise ScenarioError("flow limit fractions must be positive")
        if not self.sigma_diag > 0:
            raise ScenarioError("sigma_diag must be positive")
        if int(self.sigma_seed) != self.sigma_seed or self.sigma_seed < 0:
            raise ScenarioError("sigma_seed must be an unsigned integer")
        if len(self.renewable_forecast_mw) != len(self.renewable_buses):
            raise ScenarioError("renewable_forecast_mw needs one entry per renewable bus")
        if any(v < 0 for v in self.renewable_forecast_mw):
            raise ScenarioError("renewable forecasts must be nonnegative")
        if len(set(self.renewable_buses)) != len(self.renewable_buses):
            raise ScenarioError("renewable buses must be distinct")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        missing = {"load_scale", "flow_limit_fraction", "renewable_buses"} - set(data)
        if missing:
            raise ScenarioError(f"missing scenario keys: {sorted(missing)}")
        return cls(**data)

    def to_dict(self):
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}


def load_scenario(path):
    """Read a scenario document; return ``(case, scenario)``.

    Besides the :class:`Scenario` fields the document carries ``"case"``:
    a bundled case name or a path relative to the document.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    if not isinstance(data, dict) or "case" not in data:
        raise ScenarioError(f"{path}: scenario must be an object with a 'case' entry")
    data = dict(data)
    source = data.pop("case")
    if source not in ("case14", "case39"):
        source = path.parent / source
    return load_case(source), Scenario.from_dict(data)


@dataclass(frozen=True)
class UncertaintyModel:
    sigma: np.ndarray
    sigma_sqrt: np.ndarray
    seed: int = 0

    @property
    def renewable_count(self):
        return self.sigma.shape[0]


def _psd_sqrt(S):
    vals, vecs = np.linalg.eigh(S)
    vals = np.clip(vals, 0.0, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    return 0.5 * (root + root.T)


def sample_sigma(seed, R, diag):
    """Random PSD covariance with every diagonal entry equal to ``diag``."""
    if R < 1 or not diag > 0:
        raise ScenarioError("need R >= 1 and diag > 0")
    used = int(seed)
    while True:
        M = np.random.default_rng(used).standard_normal((R, R))
        S = M @ M.T
        dS = np.diag(S).copy()
        if np.all(dS > 0):
            break
        log.warning("degenerate covariance draw for seed %d, retrying with seed %d", used, used + 1)
        used += 1
    inv = 1.0 / np.sqrt(dS)
    sigma = diag * (S * inv[:, None] * inv[None, :])
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, diag)
    return UncertaintyModel(sigma, _psd_sqrt(sigma), used)


def compute_ptdf(case: NetworkCase, reference_bus=None):
    """Branch-by-bus PTDF: flow on each branch per unit injection at a bus, withdrawn at the reference."""
    idx = case.bus_index()
    ref = idx[case.reference_bus if reference_bus is None else reference_bus]
    nb, nl = len(case.buses), len(case.branches)
    f = np.array([idx[br.from_bus] for br in case.branches], dtype=int)
    t = np.array([idx[br.to_bus] for br in case.branches], dtype=int)
    b = np.array([br.susceptance for br in case.branches])
    Cft = np.zeros((nl, nb))
    Cft[np.arange(nl), f] = 1.0
    Cft[np.arange(nl), t] = -1.0
    Bf = b[:, None] * Cft
    Bbus = Cft.T @ Bf
    keep = np.array([i for i in range(nb) if i != ref], dtype=int)
    Bred = Bbus[np.ix_(keep, keep)]
    if nb > 1 and np.linalg.matrix_rank(Bred) < nb - 1:
        raise StructuralError("reduced susceptance matrix is singular; network is disconnected")
    ptdf = np.zeros((nl, nb))
    if nb > 1:
        ptdf[:, keep] = np.linalg.solve(Bred.T, Bf[:, keep].T).T
    return ptdf


@dataclass(frozen=True)
class ChanceRow:
    key: str
    mean_row: np.ndarray
    offset: float
    noise_matrix: np.ndarray
    noise_offset: np.ndarray


@dataclass(frozen=True)
class CompactModel:
    """Deterministic data ``(A_eq, b_eq, E_ineq, f_ineq)``, chance rows and cost."""

    A_eq: np.ndarray
    b_eq: np.ndarray
    E_ineq: np.ndarray
    f_ineq: np.ndarray
    chance_rows: tuple[ChanceRow, ...]
    uncertainty: UncertaintyModel
    cost: np.ndarray
    labels: tuple[str, ...] = field(default=())

    @property
    def n(self):
        return self.cost.shape[0]

    @property
    def keys(self):
        return [r.key for r in self.chance_rows]

    def row_index(self, key):
        for i, r in enumerate(self.chance_rows):
            if r.key == key:
                return i
        raise KeyError(f"no chance row {key!r}; known rows start with {self.keys[:4]}")

    def stacked(self):
        """Return ``(W, d, F, g)``: mean rows, offsets and Sigma-scaled noise maps (K x R x n, K x R)."""
        if not self.chance_rows:
            return np.zeros((0, self.n)), np.zeros(0), np.zeros((0, 0, self.n)), np.zeros((0, 0))
        L = self.uncertainty.sigma_sqrt
        W = np.array([r.mean_row for r in self.chance_rows]).reshape(len(self.chance_rows), self.n)
        d = np.array([r.offset for r in self.chance_rows])
        F = np.array([L @ r.noise_matrix for r in self.chance_rows]).reshape(len(self.chance_rows), L.shape[0], self.n)
        g = np.array([L @ r.noise_offset for r in self.chance_rows]).reshape(len(self.chance_rows), L.shape[0])
        return W, d, F, g

    def nu(self, x):
        """Standard deviation ``||Sigma^(1/2)(M_k x + m_k)||`` of every chance row at ``x``."""
        _, _, F, g = self.stacked()
        return np.linalg.norm(F @ x + g, axis=1) if len(self.chance_rows) else np.zeros(0)


def _keyed(prefix, names):
    seen = {}
    out = []
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        out.append(f"{prefix}:{name}" + (f"#{seen[name]}" if seen[name] > 1 else ""))
    return out


def build_compact(case: NetworkCase, scenario: Scenario) -> CompactModel:
    idx = case.bus_index()
    for bus in scenario.renewable_buses:
        if bus not in idx:
            raise ScenarioError(f"renewable bus {bus} is not in the case")
    if not scenario.renewable_buses:
        raise ScenarioError("scenario has no renewable buses to carry the covariance")
    base = case.base_mva
    G = len(case.generators)
    R = len(scenario.renewable_buses)
    n = 2 * G

    load = np.zeros(len(case.buses))
    for b in case.buses:
        load[idx[b.id]] = scenario.load_scale * b.load_mw
    forecast = np.zeros(len(case.buses))
    for bus, mw in zip(scenario.renewable_buses, scenario.renewable_forecast_mw):
        forecast[idx[bus]] += mw
    if forecast.sum() >= load.sum():
        raise ScenarioError(f"renewable forecast {forecast.sum():g} MW is not below scaled load {load.sum():g} MW")

    fmax = np.array([
        (scenario.stub_flow_limit_fraction if br.is_generator_stub else scenario.flow_limit_fraction) * br.susceptance * base
        for br in case.branches
    ])
    ptdf = compute_ptdf(case)
    gen_cols = np.array([idx[g.bus] for g in case.generators], dtype=int)
    ren_cols = np.array([idx[b] for b in scenario.renewable_buses], dtype=int)
    ptdf_g = ptdf[:, gen_cols]
    fixed_flow = ptdf @ (forecast - load)

    A_eq = np.zeros((2, n))
    A_eq[0, :G] = 1.0
    A_eq[1, G:] = 1.0
    b_eq = np.array([load.sum() - forecast.sum(), 1.0])

    pmin = np.array([g.p_min_mw for g in case.generators])
    eye = np.eye(G)
    E_rows = [np.hstack([-eye, np.zeros((G, G))]),
              np.hstack([np.zeros((G, G)), -eye]),
              np.hstack([np.zeros((G, G)), eye]),
              np.hstack([-ptdf_g, np.zeros((len(fmax), G))])]
    f_rows = [-pmin, np.zeros(G), np.ones(G), fmax + fixed_flow]
    labels = (_keyed("pmin", [g.bus for g in case.generators]) + _keyed("alpha_lo", [g.bus for g in case.generators])
              + _keyed("alpha_hi", [g.bus for g in case.generators]) + _keyed("flow_lo", [br.key for br in case.branches]))

    rows = []
    for k, (gen, key) in enumerate(zip(case.generators, _keyed("gen", [g.bus for g in case.generators]))):
        w = np.zeros(n)
        w[k] = 1.0
        M = np.zeros((R, n))
        M[:, G + k] = -base
        rows.append(ChanceRow(key, w, float(gen.p_max_mw), M, np.zeros(R)))
    for k, key in enumerate(_keyed("branch", [br.key for br in case.branches])):
        w = np.zeros(n)
        w[:G] = ptdf_g[k]
        M = np.zeros((R, n))
        M[:, G:] = -base * ptdf_g[k][None, :]
        rows.append(ChanceRow(key, w, float(fmax[k] - fixed_flow[k]), M, base * ptdf[k, ren_cols]))

    cost = np.concatenate([[g.cost_linear for g in case.generators], np.zeros(G)])
    return CompactModel(
        A_eq=A_eq,
        b_eq=b_eq,
        E_ineq=np.vstack(E_rows),
        f_ineq=np.concatenate(f_rows),
        chance_rows=tuple(rows),
        uncertainty=sample_sigma(scenario.sigma_seed, R, scenario.sigma_diag),
        cost=cost,
        labels=tuple(labels),
    )
