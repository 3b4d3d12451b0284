"""Uplink transmission model and spectral-efficiency evaluation.

Every user transmits simultaneously through a diagonal per-antenna amplitude
matrix; each base station applies maximum-ratio combining and the central
unit averages the local estimates.  Spectral efficiency comes in two
flavours that must agree: a Monte-Carlo estimate of the achievable-rate
bound over channel draws, and a closed form for maximum-ratio combining
whose second and fourth Gaussian moments are evaluated analytically from
the channel covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelStats, sample_ssf_batch

__all__ = [
    "PowerAllocation",
    "SeReport",
    "uplink_receive",
    "mr_combiner",
    "cpu_estimate",
    "se_monte_carlo",
    "se_closed_form_mr",
    "gaussian_moment_oracle",
    "masked_covariance",
    "second_moment",
    "interference_terms",
    "draw_channel_grid",
]

RIDGE = 1e-12


@dataclass
class PowerAllocation:
    """Diagonal per-antenna transmit amplitudes under a total power budget.

    The transmit matrix is diag(amplitudes); its squared Frobenius norm
    (the radiated power) may not exceed ``budget`` watts.
    """

    amplitudes: np.ndarray
    budget: float

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)
        if np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be nonnegative")
        if self.trace > self.budget + 1e-12:
            raise ValueError(
                f"power {self.trace:.6g} W exceeds the budget {self.budget:.6g} W"
            )

    @property
    def n_s(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.amplitudes.astype(complex))

    @property
    def gram(self) -> np.ndarray:
        """P P^H, the diagonal matrix of per-antenna powers."""
        return np.diag(self.amplitudes.astype(complex) ** 2)

    @property
    def trace(self) -> float:
        return float(np.sum(self.amplitudes**2))


@dataclass(frozen=True)
class SeReport:
    """Per-user and summed spectral efficiency in bits/s/Hz."""

    per_ue: np.ndarray
    sum_se: float = field(init=False)

    def __post_init__(self):
        per_ue = np.asarray(self.per_ue, dtype=float)
        object.__setattr__(self, "per_ue", per_ue)
        object.__setattr__(self, "sum_se", float(per_ue.sum()))


def uplink_receive(channels, powers, symbols, noise_power, rng) -> np.ndarray:
    """Received vector at one base station for simultaneous uplink users.

    Parameters
    ----------
    channels : list of (N_r, N_s) arrays, one per user.
    powers : list of PowerAllocation, one per user.
    symbols : list of (N_s,) transmit symbol vectors.
    noise_power : variance of the additive circular Gaussian noise.
    """
    if not channels:
        raise ValueError("at least one user required")
    if not (len(channels) == len(powers) == len(symbols)):
        raise ValueError("channels, powers and symbols must have equal length")
    n_r = channels[0].shape[0]
    y = np.zeros(n_r, dtype=complex)
    for g, p, x in zip(channels, powers, symbols):
        x = np.asarray(x)
        if g.shape[1] != p.n_s or x.shape != (p.n_s,):
            raise ValueError("dimension mismatch between channel, power and symbols")
        y += g @ (p.matrix @ x)
    if noise_power > 0:
        noise = (
            rng.standard_normal(n_r) + 1j * rng.standard_normal(n_r)
        ) * math.sqrt(noise_power / 2.0)
        y += noise
    return y


def mr_combiner(channel: np.ndarray) -> np.ndarray:
    """Maximum-ratio combining matrix: the channel itself."""
    return channel


def cpu_estimate(local_estimates) -> np.ndarray:
    """Average the per-base-station symbol estimates at the central unit."""
    if len(local_estimates) == 0:
        raise ValueError("no local estimates to combine")
    return np.mean(np.asarray(local_estimates), axis=0)


# ---------------------------------------------------------------------------
# Gaussian-moment machinery.
#
# vec(G) is zero-mean circularly-symmetric with covariance R; as a 4-tensor
# r4[a, i, b, j] = E{ G[a, i] * conj(G[b, j]) }.  All spectral-efficiency
# expectations reduce to its contractions.
# ---------------------------------------------------------------------------


def masked_covariance(stats: ChannelStats, mask: str = "lsf") -> np.ndarray:
    """Covariance of the vectorized full channel (large-scale applied).

    ``lsf`` applies the per-antenna-pair coefficients, ``beta`` the scalar
    far-distance approximation, ``none`` returns the small-scale covariance.
    """
    if mask == "none":
        return stats.corr
    if mask == "beta":
        if stats.beta is None:
            raise ValueError("stats carry no scalar beta")
        return (stats.beta**2) * stats.corr
    if mask == "lsf":
        if stats.lsf is None:
            raise ValueError("stats carry no per-antenna lsf matrix")
        vec_b = stats.lsf.reshape(-1, order="F")
        return stats.corr * np.outer(vec_b, vec_b)
    raise ValueError(f"unknown mask mode {mask!r}")


def _as_r4(cov: np.ndarray, n_r: int, n_s: int) -> np.ndarray:
    return cov.reshape((n_r, n_s, n_r, n_s), order="F")


def second_moment(cov: np.ndarray, n_r: int, n_s: int) -> np.ndarray:
    """E{G^H G} from the covariance of vec(G)."""
    return np.einsum("apai->ip", _as_r4(cov, n_r, n_s))


def _weighted_outer(r4: np.ndarray, pbar: np.ndarray) -> np.ndarray:
    """E{G P' G^H} for P' = pbar: the receive-side weighting matrix."""
    return np.einsum("apbq,pq->ab", r4, pbar)


def _quadratic_through(r4_own: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """E{G^H W G} for a fixed receive-side weight W."""
    return np.einsum("bjai,ab->ij", r4_own, weight)


def interference_terms(r4_grid, pbar_list, k: int) -> np.ndarray:
    """Sum over stations and users of the fourth/second-moment interference.

    Returns sum_m sum_l E{G_mk^H E{G_ml Pbar_l G_ml^H} G_mk} plus, for
    l = k, the extra same-channel Wick pairing; equals
    sum_l T_kl - E_k E_k^H after the coherent part cancels.
    """
    n_s = pbar_list[k].shape[0]
    out = np.zeros((n_s, n_s), dtype=complex)
    n_bs = len(r4_grid)
    n_ue = len(r4_grid[0])
    for m in range(n_bs):
        for l in range(n_ue):
            w = _weighted_outer(r4_grid[m][l], pbar_list[l])
            out += _quadratic_through(r4_grid[m][k], w)
    return out


def _logdet_se(e_mat: np.ndarray, psi: np.ndarray, rel_ridge: float = RIDGE) -> float:
    # ridge is relative to the matrix scale; an absolute one would dwarf
    # desk-scale interference powers (~1e-22 W)
    n_s = e_mat.shape[1]
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(e_mat))):
        raise np.linalg.LinAlgError(
            "interference-plus-noise matrix or signal moment is not finite"
        )
    scale = float(np.real(np.trace(psi))) / n_s
    ridge = rel_ridge * scale if scale > 0 else rel_ridge
    psi_reg = psi + ridge * np.eye(n_s)
    try:
        x = np.linalg.solve(psi_reg, e_mat)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"interference-plus-noise matrix singular after {ridge:g} ridge: {exc}"
        ) from exc
    m = np.eye(n_s) + np.conj(e_mat.T) @ x
    sign, logabs = np.linalg.slogdet(m)
    if not np.isfinite(logabs):
        raise np.linalg.LinAlgError("log-det of the rate expression is not finite")
    return max(float(logabs / math.log(2.0)), 0.0)


def se_closed_form_mr(stats_grid, powers, noise_power, mask: str = "lsf") -> SeReport:
    """Closed-form spectral efficiency under maximum-ratio combining.

    ``stats_grid[m][k]`` holds the statistics of the link from user k to
    station m.  All Gaussian moments are evaluated analytically from the
    masked channel covariance; channels of distinct stations or users are
    independent.
    """
    n_bs = len(stats_grid)
    n_ue = len(stats_grid[0])
    if len(powers) != n_ue:
        raise ValueError("one PowerAllocation per user required")
    n_r = stats_grid[0][0].n_r
    n_s = stats_grid[0][0].n_s
    r4_grid = [
        [_as_r4(masked_covariance(stats_grid[m][k], mask), n_r, n_s) for k in range(n_ue)]
        for m in range(n_bs)
    ]
    z_grid = [[np.einsum("apai->ip", r4_grid[m][k]) for k in range(n_ue)] for m in range(n_bs)]
    pbar = [p.gram for p in powers]
    per_ue = np.zeros(n_ue)
    for k in range(n_ue):
        z_sum = np.sum([z_grid[m][k] for m in range(n_bs)], axis=0)
        e_mat = z_sum @ powers[k].matrix
        psi = interference_terms(r4_grid, pbar, k) + noise_power * z_sum
        psi = (psi + np.conj(psi.T)) / 2.0
        eigs = np.linalg.eigvalsh(psi)
        if eigs.min() < -1e-8 * max(np.abs(eigs).max(), RIDGE):
            raise ValueError(
                f"interference-plus-noise matrix for user {k} is not PSD "
                f"(min eigenvalue {eigs.min():.3g})"
            )
        per_ue[k] = _logdet_se(e_mat, psi)
    return SeReport(per_ue=per_ue)


def draw_channel_grid(stats_grid, n: int, rng: np.random.Generator, mask: str = "lsf"):
    """Draw ``n`` realizations of every link's full channel.

    Returns nested lists ``g[m][k]`` of shape (n, N_r, N_s).  Draw order is
    fixed: stations outer, users inner, one batch per link.
    """
    out = []
    for row in stats_grid:
        out_row = []
        for stats in row:
            h = sample_ssf_batch(stats, n, rng)
            if mask == "lsf":
                g = stats.lsf[None, :, :] * h
            elif mask == "beta":
                g = stats.beta * h
            elif mask == "none":
                g = h
            else:
                raise ValueError(f"unknown mask mode {mask!r}")
            out_row.append(g)
        out.append(out_row)
    return out


def _mc_chunk_sums(stats_grid, pbar, n: int, rng, mask):
    """Per-chunk accumulators: sums over draws of G^H G and C Pbar C^H."""
    n_bs = len(stats_grid)
    n_ue = len(stats_grid[0])
    g = draw_channel_grid(stats_grid, n, rng, mask=mask)
    n_s = g[0][0].shape[2]
    a_sum = [np.zeros((n_s, n_s), dtype=complex) for _ in range(n_ue)]
    t_sum = [[np.zeros((n_s, n_s), dtype=complex) for _ in range(n_ue)] for _ in range(n_ue)]
    for k in range(n_ue):
        for l in range(n_ue):
            c = np.zeros((n, n_s, n_s), dtype=complex)
            for m in range(n_bs):
                c += np.einsum("dab,dac->dbc", np.conj(g[m][k]), g[m][l])
            if l == k:
                a_sum[k] = c.sum(axis=0)
            x = np.einsum("dbc,cq->dbq", c, pbar[l])
            t_sum[k][l] = np.einsum("dbq,deq->dbe", x, np.conj(c)).sum(axis=0)
    return a_sum, t_sum


def se_monte_carlo(
    stats_grid,
    powers,
    noise_power,
    combiner: str = "mr",
    n_draws: int = 10_000,
    rng: np.random.Generator | None = None,
    mask: str = "lsf",
    chunk_size: int = 2048,
) -> SeReport:
    """Monte-Carlo spectral efficiency over independent channel draws.

    Draws are processed in fixed-size chunks, each with its own child
    generator spawned from ``rng``; chunk results are reduced in chunk
    order, so partitioning chunks across workers cannot change the result.
    """
    if combiner != "mr":
        raise ValueError(f"unsupported combiner {combiner!r}")
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    n_ue = len(stats_grid[0])
    if len(powers) != n_ue:
        raise ValueError("one PowerAllocation per user required")
    pbar = [p.gram for p in powers]
    sizes = [chunk_size] * (n_draws // chunk_size)
    if n_draws % chunk_size:
        sizes.append(n_draws % chunk_size)
    children = rng.spawn(len(sizes))
    chunks = [
        _mc_chunk_sums(stats_grid, pbar, size, child, mask)
        for size, child in zip(sizes, children)
    ]
    n_s = pbar[0].shape[0]
    a_hat = [np.zeros((n_s, n_s), dtype=complex) for _ in range(n_ue)]
    t_hat = [[np.zeros((n_s, n_s), dtype=complex) for _ in range(n_ue)] for _ in range(n_ue)]
    for a_sum, t_sum in chunks:
        for k in range(n_ue):
            a_hat[k] += a_sum[k]
            for l in range(n_ue):
                t_hat[k][l] += t_sum[k][l]
    per_ue = np.zeros(n_ue)
    for k in range(n_ue):
        a_k = a_hat[k] / n_draws
        e_mat = a_k @ powers[k].matrix
        psi = sum(t_hat[k][l] for l in range(n_ue)) / n_draws
        psi = psi - e_mat @ np.conj(e_mat.T) + noise_power * a_k
        psi = (psi + np.conj(psi.T)) / 2.0
        per_ue[k] = _logdet_se(e_mat, psi)
    return SeReport(per_ue=per_ue)


def gaussian_moment_oracle(
    cov: np.ndarray,
    pbar: np.ndarray,
    n_r: int,
    n_s: int,
    n_draws: int = 100_000,
    rng: np.random.Generator | None = None,
):
    """Brute-force E{G^H G Pbar G^H G} two independent ways.

    Returns (moment_pairings, moment_simulated): the first from the explicit
    two-pairing expansion of the complex Gaussian fourth moment over all
    index quadruples, the second from averaging exact Gaussian draws.
    Guarded to tiny dimensions.
    """
    dim = n_r * n_s
    if cov.shape != (dim, dim):
        raise ValueError("covariance shape disagrees with n_r * n_s")
    if dim > 8:
        raise ValueError("oracle restricted to n_r * n_s <= 8")
    if rng is None:
        rng = np.random.default_rng()

    def c(a, i, b, j):
        # E{ G[a,i] * conj(G[b,j]) }
        return cov[i * n_r + a, j * n_r + b]

    pairings = np.zeros((n_s, n_s), dtype=complex)
    for i in range(n_s):
        for j in range(n_s):
            acc = 0.0 + 0.0j
            for a in range(n_r):
                for b in range(n_r):
                    for p in range(n_s):
                        for q in range(n_s):
                            acc += pbar[p, q] * (
                                c(a, p, a, i) * c(b, j, b, q)
                                + c(a, p, b, q) * c(b, j, a, i)
                            )
            pairings[i, j] = acc

    # simulation: vec(G) = L w with L L^H = cov, w standard complex normal
    eigval, eigvec = np.linalg.eigh((cov + np.conj(cov.T)) / 2.0)
    eigval = np.clip(eigval, 0.0, None)
    l_fac = eigvec * np.sqrt(eigval)
    w = (
        rng.standard_normal((n_draws, dim)) + 1j * rng.standard_normal((n_draws, dim))
    ) / math.sqrt(2.0)
    vecs = w @ l_fac.T
    g = vecs.reshape(n_draws, n_r, n_s, order="F")
    gram = np.einsum("dab,dac->dbc", np.conj(g), g)
    x = np.einsum("dbc,cq->dbq", gram, pbar)
    simulated = np.einsum("dbq,dqe->dbe", x, gram).mean(axis=0)
    return pairings, simulated
