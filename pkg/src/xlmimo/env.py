"""Mobile uplink power-control environment.

Base stations and users live on a wrap-around square (a torus), each
carrying a planar antenna surface.  Agents observe aggregate large-scale
fading, choose a transmit power budget and optionally a movement step and
angle, and are rewarded with their closed-form spectral efficiency.  A
predictive-management rule rescales movement steps based on the team
reward: shrink them when the team is doing well, stretch them when it is
not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelStats,
    build_surface,
    fresnel_beta,
    lsf_matrix,
    make_channel_stats,
)
from .se import PowerAllocation, se_closed_form_mr

__all__ = [
    "MdpTuple",
    "AgentAction",
    "WorldState",
    "EnvParams",
    "CellFreeEnv",
    "predictive_limit",
    "project_power",
    "wrap_coords",
    "torus_delta",
    "torus_distance",
]

SCENARIOS = ("static", "dynamic", "pm-dynamic")


@dataclass(frozen=True)
class MdpTuple:
    """Decision-process constants: discount, reward thresholds, step factors."""

    gamma: float = 0.99
    r_g: float = 0.01
    r_b: float = 0.002
    alpha: float = 0.2
    beta_acc: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta_acc <= 1.0:
            raise ValueError("beta_acc must exceed 1")
        if self.r_b >= self.r_g:
            raise ValueError("r_b must be below r_g")


@dataclass(frozen=True)
class AgentAction:
    """Per-user action: power budget plus, in mobile scenarios, a move."""

    power: float
    step: float | None = None
    angle: float | None = None

    def __post_init__(self):
        vals = [self.power] + [v for v in (self.step, self.angle) if v is not None]
        if any(not math.isfinite(v) for v in vals):
            raise ValueError(f"action components must be finite, got {self!r}")

    @property
    def mobile(self) -> bool:
        return self.step is not None and self.angle is not None


@dataclass
class WorldState:
    """Snapshot of all positions, the step counter and the generator state."""

    bs_positions: np.ndarray  # (M, 3)
    ue_positions: np.ndarray  # (K, 3)
    time: int
    rng_state: dict | None = None


@dataclass(frozen=True)
class EnvParams:
    """Physical and decision-process constants of the environment."""

    m_bs: int = 2
    k_ue: int = 2
    n_h_r: int = 2
    n_v_r: int = 2
    n_h_s: int = 2
    n_v_s: int = 1
    spacing_r: float = 1.0 / 3.0  # in wavelengths
    spacing_s: float = 1.0 / 3.0
    wavelength: float = 0.01
    area: float = 1000.0
    min_bs_spacing: float = 200.0
    bs_height: float = 10.0
    ue_height: float = 1.5
    noise_power: float = 10 ** ((-69.0 - 30.0) / 10.0)
    p_max: float = 0.2
    d_max: float = 5.0
    scenario: str = "static"
    lsf_mode: str = "beta"  # mask used for rewards: "beta" or "lsf"
    raw_kz: bool = False
    fixed_placement: bool = False  # reuse the first drawn layout on every reset
    mdp: MdpTuple = field(default_factory=MdpTuple)
    max_placement_tries: int = 10_000

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.lsf_mode not in ("beta", "lsf"):
            raise ValueError("lsf_mode must be 'beta' or 'lsf'")


def wrap_coords(positions: np.ndarray, area: float) -> np.ndarray:
    """Wrap x and y into [0, area); z is untouched."""
    out = np.array(positions, dtype=float)
    out[..., :2] = np.mod(out[..., :2], area)
    return out


def torus_delta(a: np.ndarray, b: np.ndarray, area: float) -> np.ndarray:
    """Minimum-image displacement b - a; x/y components in [-area/2, area/2)."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    d[..., :2] = (d[..., :2] + area / 2.0) % area - area / 2.0
    return d


def torus_distance(a, b, area: float) -> float:
    return float(np.linalg.norm(torus_delta(a, b, area)))


def project_power(raw, budget: float) -> PowerAllocation:
    """Scale per-antenna amplitudes uniformly onto the power budget.

    Feasible allocations pass through unchanged; infeasible ones are shrunk
    so the radiated power equals the budget exactly.
    """
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0):
        raise ValueError("per-antenna amplitudes must be nonnegative")
    total = float(np.sum(raw**2))
    if total > budget:
        raw = raw * math.sqrt(budget / total)
    return PowerAllocation(raw, budget)


def predictive_limit(rewards_sum: float, step: float, thresholds: MdpTuple) -> float:
    """Movement-step restriction from the team reward.

    At or above the good threshold the step shrinks by alpha; at or below
    the bad threshold it stretches by beta_acc; in between it passes
    through.  Both boundaries belong to the scaled branches.
    """
    if rewards_sum >= thresholds.r_g:
        return thresholds.alpha * step
    if rewards_sum <= thresholds.r_b:
        return thresholds.beta_acc * step
    return step


class CellFreeEnv:
    """Torus world of base stations and mobile users with SE rewards."""

    def __init__(self, params: EnvParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        p = params
        wl = p.wavelength
        self._bs_local = build_surface(p.n_h_r, p.n_v_r, p.spacing_r * wl)
        self._ue_local = build_surface(p.n_h_s, p.n_v_s, p.spacing_s * wl)
        # small-scale statistics depend only on the local surface geometry,
        # so one base object is shared by every link
        self._base_stats = make_channel_stats(
            self._bs_local, self._ue_local, wl, raw_kz=p.raw_kz, with_lsf=False
        )
        # observation scale: aggregate fading at a quarter-area reference range
        d_ref = p.area / 4.0
        dz = abs(p.bs_height - p.ue_height)
        cos_ref = dz / math.hypot(d_ref, dz)
        self._beta_ref = math.sqrt(2.0 * cos_ref) * wl / (4.0 * math.pi * d_ref)
        self.world: WorldState | None = None
        self._initial_layout = None

    # -- dimensions the learning stack needs -------------------------------
    @property
    def n_agents(self) -> int:
        return self.params.k_ue

    @property
    def n_s(self) -> int:
        return self._ue_local.n_antennas

    @property
    def n_r(self) -> int:
        return self._bs_local.n_antennas

    @property
    def state_dim(self) -> int:
        return 1

    @property
    def action_ranges(self) -> np.ndarray:
        """Upper bound per action component (lower bounds are all zero)."""
        p = self.params
        if p.scenario == "static":
            return np.array([p.p_max])
        return np.array([p.p_max, p.d_max, 2.0 * math.pi])

    # -- placement ----------------------------------------------------------
    def reset(self) -> np.ndarray:
        p = self.params
        if p.fixed_placement and self._initial_layout is not None:
            bs0, ue0 = self._initial_layout
            self.world = WorldState(
                bs_positions=bs0.copy(),
                ue_positions=ue0.copy(),
                time=0,
                rng_state=self.rng.bit_generator.state,
            )
            return self.agent_observation()
        bs = np.empty((p.m_bs, 3))
        tries = 0
        placed = 0
        while placed < p.m_bs:
            cand = np.array(
                [self.rng.uniform(0, p.area), self.rng.uniform(0, p.area), p.bs_height]
            )
            tries += 1
            if tries > p.max_placement_tries:
                raise RuntimeError(
                    f"could not place {p.m_bs} stations with {p.min_bs_spacing} m "
                    f"spacing in {p.max_placement_tries} tries"
                )
            if all(
                torus_distance(cand, bs[i], p.area) >= p.min_bs_spacing
                for i in range(placed)
            ):
                bs[placed] = cand
                placed += 1
        ue = np.column_stack(
            [
                self.rng.uniform(0, p.area, size=p.k_ue),
                self.rng.uniform(0, p.area, size=p.k_ue),
                np.full(p.k_ue, p.ue_height),
            ]
        )
        self.world = WorldState(
            bs_positions=bs,
            ue_positions=ue,
            time=0,
            rng_state=self.rng.bit_generator.state,
        )
        if p.fixed_placement:
            self._initial_layout = (bs.copy(), ue.copy())
        return self.agent_observation()

    def set_world(self, bs_positions, ue_positions, time: int = 0):
        """Install explicit positions (debugging and deterministic tests)."""
        self.world = WorldState(
            bs_positions=wrap_coords(np.asarray(bs_positions, float), self.params.area),
            ue_positions=wrap_coords(np.asarray(ue_positions, float), self.params.area),
            time=time,
        )
        return self.agent_observation()

    # -- observations --------------------------------------------------------
    def _pair_geometries(self, m: int, k: int):
        """BS surface at the origin, UE surface at the minimum-image offset."""
        w = self.world
        rel = torus_delta(w.bs_positions[m], w.ue_positions[k], self.params.area)
        return self._bs_local, self._ue_local.translated(rel)

    def _pair_beta(self, m: int, k: int) -> float:
        geom_r, geom_s = self._pair_geometries(m, k)
        try:
            return fresnel_beta(geom_r, geom_s, self.params.wavelength)
        except ValueError:
            return float(lsf_matrix(geom_r, geom_s, self.params.wavelength).mean())

    def observe_layer1(self) -> np.ndarray:
        """Raw per-user aggregate fading: sum over stations of beta."""
        p = self.params
        return np.array(
            [sum(self._pair_beta(m, k) for m in range(p.m_bs)) for k in range(p.k_ue)]
        )

    def observe_layer2(self) -> np.ndarray:
        """Per-user-antenna fading aggregated over stations and their antennas.

        Shape (K, N_s); entry (k, n) sums the exact per-pair coefficients of
        user antenna n over every station antenna of every station.
        """
        p = self.params
        out = np.zeros((p.k_ue, self.n_s))
        for k in range(p.k_ue):
            for m in range(p.m_bs):
                geom_r, geom_s = self._pair_geometries(m, k)
                out[k] += lsf_matrix(geom_r, geom_s, p.wavelength).sum(axis=0)
        return out

    def agent_observation(self) -> np.ndarray:
        """Scaled layer-1 state, one row per agent."""
        betas = self.observe_layer1()
        return (betas / (self.params.m_bs * self._beta_ref)).reshape(-1, 1)

    def layer2_observation_scale(self) -> float:
        return self.params.m_bs * self.n_r * self._beta_ref

    # -- dynamics -------------------------------------------------------------
    def stats_grid(self) -> list:
        """Channel statistics for every link at the current positions."""
        p = self.params
        need_lsf = p.lsf_mode == "lsf"
        grid = []
        for m in range(p.m_bs):
            row = []
            for k in range(p.k_ue):
                base = self._base_stats
                lsf = None
                if need_lsf:
                    geom_r, geom_s = self._pair_geometries(m, k)
                    lsf = lsf_matrix(geom_r, geom_s, p.wavelength)
                row.append(
                    ChannelStats(
                        u_r=base.u_r,
                        u_s=base.u_s,
                        v_r=base.v_r,
                        v_s=base.v_s,
                        corr=base.corr,
                        lsf=lsf,
                        beta=self._pair_beta(m, k),
                    )
                )
            grid.append(row)
        return grid

    def allocations_from_actions(self, actions) -> list:
        """Uniform per-antenna split of each user's power budget."""
        allocs = []
        for a in actions:
            budget = min(max(a.power, 0.0), self.params.p_max)
            raw = np.full(self.n_s, math.sqrt(budget / self.n_s))
            allocs.append(project_power(raw, budget))
        return allocs

    def step(self, actions, mode: str | None = None, allocations=None):
        """Advance one slot: rewards at the current positions, then movement.

        Returns (observation, rewards, info).  Rewards are the per-user
        closed-form SE under the induced (or supplied) power allocations;
        in mobile modes users then move by (step*cos(angle), step*sin(angle))
        with the predictive rule rescaling steps in ``pm-dynamic`` mode.
        """
        if self.world is None:
            raise RuntimeError("reset() must be called before step()")
        p = self.params
        mode = p.scenario if mode is None else mode
        if mode not in SCENARIOS:
            raise ValueError(f"unknown mode {mode!r}")
        if len(actions) != p.k_ue:
            raise ValueError("one action per user required")
        if allocations is None:
            allocations = self.allocations_from_actions(actions)
        for alloc in allocations:
            if alloc.trace > alloc.budget + 1e-12 or alloc.budget > p.p_max + 1e-12:
                raise ValueError("allocation violates the power constraint")
        report = se_closed_form_mr(
            self.stats_grid(), allocations, p.noise_power, mask=p.lsf_mode
        )
        rewards = report.per_ue.copy()
        if mode != "static":
            team = float(rewards.sum())
            ue = self.world.ue_positions.copy()
            for k, a in enumerate(actions):
                if not a.mobile:
                    raise ValueError(f"scenario {mode!r} requires mobile actions")
                step_len = min(max(a.step, 0.0), p.d_max)
                if mode == "pm-dynamic":
                    step_len = predictive_limit(team, step_len, p.mdp)
                ue[k, 0] += step_len * math.cos(a.angle)
                ue[k, 1] += step_len * math.sin(a.angle)
            self.world.ue_positions = wrap_coords(ue, p.area)
        self.world.time += 1
        self.world.rng_state = self.rng.bit_generator.state
        info = {
            "sum_se": float(rewards.sum()),
            "se_report": report,
            "power_trace": [alloc.trace for alloc in allocations],
            "budgets": [alloc.budget for alloc in allocations],
            "positions": self.world.ue_positions.copy(),
        }
        return self.agent_observation(), rewards, info
