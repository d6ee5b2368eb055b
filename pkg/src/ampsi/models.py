"""Signal priors and samplers.

Three scalar signal models are supported:

* ``BgPrior``  -- Bernoulli-Gauss: zero w.p. 1-epsilon, else N(0, 1).
* ``BddPrior`` -- birth/death/drift pair model over consecutive batches.
* ``GgPrior``  -- plain Gaussian with variance sigma_x_sq.

The BDD model describes the joint law of an entry in consecutive batches
(x_prev, x_curr) through four cases drawn with probabilities eps1..eps4:

    case 1  stay zero    x_prev = 0,             x_curr = 0
    case 2  death        x_prev ~ N(0, ss),      x_curr = 0
    case 3  drift        x_prev ~ N(0, ss),      x_curr = rho*x_prev + N(0, s)
    case 4  birth        x_prev = 0,             x_curr ~ N(0, ss)

with ss = sigma_s_sq and s = sigma_sq = (1 - rho^2)*sigma_s_sq, so that the
drift case preserves the marginal variance.  ``sample_bdd_pair`` draws fresh
pairs from this joint law (used by state evolution and the MMSE oracle);
``sample_bdd_step`` advances a realized batch to the next one with the
conditional law of x_curr given x_prev, which keeps a chain of batches
stationary with per-entry nonzero fraction eps3 + eps4.
"""

from dataclasses import dataclass, field

import numpy as np

_EPS_TOL = 1e-12


@dataclass(frozen=True)
class BgPrior:
    """Bernoulli-Gauss prior: nonzero w.p. epsilon, nonzeros N(0, 1)."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")


@dataclass(frozen=True)
class GgPrior:
    """Gaussian prior N(0, sigma_x_sq)."""

    sigma_x_sq: float

    def __post_init__(self):
        if not self.sigma_x_sq > 0:
            raise ValueError("sigma_x_sq must be positive")


@dataclass(frozen=True)
class BddPrior:
    """Birth/death/drift pair model.

    sigma_sq is derived from the variance-preservation constraint
    rho^2*sigma_s_sq + sigma_sq = sigma_s_sq, so rho = 1 means drift with no
    innovation noise (the degenerate limit used when reducing to BgPrior).
    """

    eps1: float
    eps2: float
    eps3: float
    eps4: float
    sigma_s_sq: float = 1.0
    rho: float = 0.95
    sigma_sq: float = field(init=False)

    def __post_init__(self):
        eps = (self.eps1, self.eps2, self.eps3, self.eps4)
        if any(e < 0 for e in eps):
            raise ValueError("case probabilities must be nonnegative")
        if abs(sum(eps) - 1.0) > _EPS_TOL:
            raise ValueError(f"case probabilities must sum to 1, got {sum(eps)}")
        if not self.sigma_s_sq > 0:
            raise ValueError("sigma_s_sq must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        object.__setattr__(
            self, "sigma_sq", (1.0 - self.rho**2) * self.sigma_s_sq)

    @property
    def gamma(self):
        """Stationary per-entry nonzero probability eps3 + eps4."""
        return self.eps3 + self.eps4


@dataclass(frozen=True)
class SiChannel:
    """Additive-Gaussian side-information channel: b = x_ref + N(0, sigma_hat_sq)."""

    sigma_hat_sq: float

    def __post_init__(self):
        if self.sigma_hat_sq < 0:
            raise ValueError("sigma_hat_sq must be nonnegative")


@dataclass
class SignalPair:
    """A signal with its side information and, for BDD, the generating pair."""

    x: np.ndarray
    x_tilde: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    case_labels: np.ndarray | None = None


def signal_second_moment(prior):
    """E[X^2] under the prior's (stationary, for BDD) signal marginal."""
    if isinstance(prior, BgPrior):
        return prior.epsilon
    if isinstance(prior, BddPrior):
        return prior.gamma * prior.sigma_s_sq
    if isinstance(prior, GgPrior):
        return prior.sigma_x_sq
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def sample_bg(prior: BgPrior, n, seed=None):
    """Draw n i.i.d. Bernoulli-Gauss entries."""
    rng = np.random.default_rng(seed)
    support = rng.random(n) < prior.epsilon
    values = rng.standard_normal(n)
    return np.where(support, values, 0.0)


def sample_gg(prior: GgPrior, n, seed=None):
    """Draw n i.i.d. N(0, sigma_x_sq) entries."""
    rng = np.random.default_rng(seed)
    return np.sqrt(prior.sigma_x_sq) * rng.standard_normal(n)


def _case_matrix(prior: BddPrior):
    return np.array([prior.eps1, prior.eps2, prior.eps3, prior.eps4])


def sample_bdd_pair(prior: BddPrior, n, seed=None):
    """Draw n fresh (x_prev, x_curr) pairs from the four-case joint law.

    Returns a SignalPair with x = current batch, x_prev, and case_labels in
    {1, 2, 3, 4}.  Entries are mutually independent; each case j is selected
    with probability eps_j.
    """
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    gp = rng.standard_normal(n)   # previous-batch value where one is drawn
    gc = rng.standard_normal(n)   # innovation / birth value
    cases = np.searchsorted(np.cumsum(_case_matrix(prior)), u, side="right") + 1
    cases = np.minimum(cases, 4)  # guard against u landing on the last edge

    ss = np.sqrt(prior.sigma_s_sq)
    s = np.sqrt(prior.sigma_sq)
    x_prev = np.where((cases == 2) | (cases == 3), ss * gp, 0.0)
    x_curr = np.zeros(n)
    drift = cases == 3
    birth = cases == 4
    x_curr[drift] = prior.rho * x_prev[drift] + s * gc[drift]
    x_curr[birth] = ss * gc[birth]
    return SignalPair(x=x_curr, x_prev=x_prev, case_labels=cases)


def sample_bdd_stationary(prior: BddPrior, n, seed=None):
    """Draw a batch from the stationary marginal: nonzero w.p. gamma, N(0, ss)."""
    rng = np.random.default_rng(seed)
    support = rng.random(n) < prior.gamma
    values = np.sqrt(prior.sigma_s_sq) * rng.standard_normal(n)
    return np.where(support, values, 0.0)


def sample_bdd_step(prior: BddPrior, x_prev, seed=None):
    """Advance a realized batch one step under the BDD transition law.

    Entries currently nonzero die (case 2) or drift (case 3) with conditional
    probabilities eps2 : eps3; zero entries stay (case 1) or are born (case 4)
    with probabilities eps1 : eps4.  This is the conditional law of x_curr
    given x_prev implied by the four-case joint, so a chain started from
    sample_bdd_stationary stays stationary.  If the conditional mass for an
    entry's support type is zero (the model assigns probability zero to such
    an x_prev), the unconditional case probabilities are used for that entry.

    Returns (x_curr, case_labels).
    """
    x_prev = np.asarray(x_prev, dtype=float)
    n = x_prev.shape[0]
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    g = rng.standard_normal(n)

    nz = x_prev != 0.0
    cases = np.empty(n, dtype=np.int64)

    m_nz = prior.eps2 + prior.eps3
    m_z = prior.eps1 + prior.eps4
    # unconditional fallback for support types the model gives zero mass
    fallback = np.searchsorted(np.cumsum(_case_matrix(prior)), u, side="right") + 1
    fallback = np.minimum(fallback, 4)
    if m_nz > 0:
        cases[nz] = np.where(u[nz] < prior.eps2 / m_nz, 2, 3)
    else:
        cases[nz] = fallback[nz]
    if m_z > 0:
        cases[~nz] = np.where(u[~nz] < prior.eps1 / m_z, 1, 4)
    else:
        cases[~nz] = fallback[~nz]

    ss = np.sqrt(prior.sigma_s_sq)
    s = np.sqrt(prior.sigma_sq)
    x_curr = np.zeros(n)
    drift = cases == 3
    birth = cases == 4
    x_curr[drift] = prior.rho * x_prev[drift] + s * g[drift]
    x_curr[birth] = ss * g[birth]
    return x_curr, cases


def make_si(x_ref, channel: SiChannel, seed=None):
    """Observe x_ref through the additive-Gaussian SI channel."""
    x_ref = np.asarray(x_ref, dtype=float)
    if channel.sigma_hat_sq == 0:
        return x_ref.copy()
    rng = np.random.default_rng(seed)
    return x_ref + np.sqrt(channel.sigma_hat_sq) * rng.standard_normal(x_ref.shape[0])
