"""Two-level emitter coupled to a single cavity mode with Fano cross damping.

Energies and rates are in ueV and times in ps at every public entry point.
Internally everything runs with hbar = 1, i.e. times are measured in ueV^-1;
``to_natural`` / ``to_ps`` do the conversion.

Basis ordering is the tensor product TLS x cavity with the TLS index first,
``index = tls * (n_max + 1) + n`` with tls = 0 (g) or 1 (e).  For the default
truncation this is {|g,0>, |g,1>, |e,0>, |e,1>}.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import InvariantViolation, OutOfTrajectory, StepTooLarge

HBAR = 658.2119569  # ueV * ps

TRUNCATIONS = {"n1": 1, "n2": 2}
FANO_ORDERINGS = ("as_written", "excitation_conserving")
# The literal operator ordering of the Fano cross terms does not reproduce the
# analytic rates and coefficients; see tests/test_model.py::test_fano_ordering_*.
DEFAULT_FANO_ORDERING = "excitation_conserving"

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-9


def to_natural(t_ps):
    """ps -> ueV^-1."""
    return np.asarray(t_ps, dtype=float) / HBAR


def to_ps(t_nat):
    return np.asarray(t_nat, dtype=float) * HBAR


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the emitter-cavity model (all energies in ueV)."""

    g_mag: float = 100.0
    g_phase: float = np.pi / 2
    kappa: float = 50.0
    gamma: float = 0.05
    gamma_ph: float = 0.0
    eta: float = 0.0
    theta: float = 0.0
    omega_21: float = 0.0
    omega_c: float = 0.0

    def __post_init__(self):
        for name in ("g_mag", "kappa", "gamma", "gamma_ph"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        for name in ("g_phase", "theta", "omega_21", "omega_c"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @property
    def g(self) -> complex:
        return self.g_mag * np.exp(1j * self.g_phase)

    @property
    def gamma_f(self) -> complex:
        """Fano cross-damping amplitude; |gamma_f|^2 = eta * gamma * kappa."""
        return np.exp(1j * self.theta) * np.sqrt(self.eta * self.gamma * self.kappa)

    @property
    def g_plus(self) -> complex:
        return self.g + 0.5j * self.gamma_f

    @property
    def g_minus(self) -> complex:
        return self.g - 0.5j * self.gamma_f

    @property
    def gamma_tot(self) -> float:
        return 0.5 * (self.gamma + self.kappa) + self.gamma_ph

    @property
    def omega_c21(self) -> float:
        return self.omega_c - self.omega_21

    @property
    def rabi_frequency(self) -> float:
        """sqrt(detuning^2 + 4|g|^2), ueV."""
        return float(np.hypot(self.omega_c21, 2.0 * self.g_mag))

    @property
    def rabi_period_ps(self) -> float:
        """2 pi hbar / Omega_R; infinite without coupling or detuning."""
        omega = self.rabi_frequency
        return 2 * np.pi * HBAR / omega if omega > 0 else float("inf")

    @property
    def gamma_max(self) -> float:
        return max(self.kappa, self.gamma, self.gamma_ph, 2 * self.g_mag, abs(self.omega_c21))


@dataclass(frozen=True)
class Basis:
    n_max: int = 1

    @classmethod
    def from_label(cls, label: str) -> "Basis":
        try:
            return cls(TRUNCATIONS[label])
        except KeyError:
            raise ValueError(
                f"unknown truncation {label!r}; expected one of {sorted(TRUNCATIONS)}"
            ) from None

    @property
    def label(self) -> str:
        return {v: k for k, v in TRUNCATIONS.items()}[self.n_max]

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def index(self, tls: str, n: int) -> int:
        return {"g": 0, "e": 1}[tls] * (self.n_max + 1) + n

    def ket(self, tls: str, n: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(tls, n)] = 1.0
        return v

    @property
    def sm(self) -> np.ndarray:
        """TLS lowering operator sigma_-."""
        return np.kron(np.array([[0, 1], [0, 0]], dtype=complex), np.eye(self.n_max + 1))

    @property
    def a(self) -> np.ndarray:
        cav = np.diag(np.sqrt(np.arange(1, self.n_max + 1)), k=1).astype(complex)
        return np.kron(np.eye(2), cav)

    def observables(self) -> dict:
        sm, a = self.sm, self.a
        sp, ad = sm.conj().T, a.conj().T
        return {
            "n_cav": ad @ a,
            "n_tls": sp @ sm,
            "coh": sp @ a,
            "coh_conj_pair": ad @ sm,
        }


def hamiltonian(params: SystemParams, basis: Basis) -> np.ndarray:
    sm, a = basis.sm, basis.a
    sp, ad = sm.conj().T, a.conj().T
    sz = sp @ sm - sm @ sp
    return (
        0.5 * params.omega_21 * sz
        + params.omega_c * ad @ a
        + params.g * sp @ a
        + np.conj(params.g) * ad @ sm
    )


def _commutator_super(h):
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator_super(x, y):
    """Row-major superoperator of D_{X,Y} rho = 2 Y rho X - X Y rho - rho X Y."""
    eye = np.eye(x.shape[0])
    xy = x @ y
    return 2 * np.kron(y, x.T) - np.kron(xy, eye) - np.kron(eye, xy.T)


@dataclass(frozen=True)
class LiouvillianMatrix:
    """Generator acting on row-major vectorised density matrices."""

    L: np.ndarray
    L_adj: np.ndarray
    basis: Basis
    params: SystemParams
    fano_ordering: str

    def apply(self, rho):
        d = self.basis.dim
        return (self.L @ np.asarray(rho).reshape(d * d)).reshape(d, d)

    def apply_adjoint(self, x):
        d = self.basis.dim
        return (self.L_adj @ np.asarray(x).reshape(d * d)).reshape(d, d)


def build_liouvillian(
    params: SystemParams,
    truncation: str = "n1",
    fano_ordering: str = DEFAULT_FANO_ORDERING,
) -> LiouvillianMatrix:
    basis = Basis.from_label(truncation)
    if fano_ordering not in FANO_ORDERINGS:
        raise ValueError(f"unknown fano_ordering {fano_ordering!r}; expected one of {FANO_ORDERINGS}")
    if params.eta * params.gamma * params.kappa < 0:
        raise ValueError("eta * gamma * kappa must be non-negative")

    sm, a = basis.sm, basis.a
    sp, ad = sm.conj().T, a.conj().T
    gf = params.gamma_f

    L = _commutator_super(hamiltonian(params, basis))
    L = L + 0.5 * params.gamma * _dissipator_super(sp, sm)
    L = L + 0.5 * params.kappa * _dissipator_super(ad, a)
    L = L + params.gamma_ph * _dissipator_super(sp @ sm, sp @ sm)
    if gf != 0:
        if fano_ordering == "as_written":
            L = L + 0.5 * gf * _dissipator_super(a, sp) + 0.5 * np.conj(gf) * _dissipator_super(sm, ad)
        else:
            L = L + 0.5 * gf * _dissipator_super(sp, a) + 0.5 * np.conj(gf) * _dissipator_super(ad, sm)
    # Hilbert-Schmidt adjoint is the conjugate transpose in the vectorised picture.
    return LiouvillianMatrix(L, L.conj().T, basis, params, fano_ordering)


def initial_state(basis: Basis, populations: Optional[dict] = None) -> np.ndarray:
    """Diagonal density matrix; defaults to the excited emitter |e,0><e,0|.

    ``populations`` maps labels such as ``"e0"`` or ``"g1"`` to weights.
    """
    populations = {"e0": 1.0} if populations is None else populations
    rho = np.zeros((basis.dim, basis.dim), dtype=complex)
    for label, p in populations.items():
        if p < 0:
            raise ValueError(f"population of {label} must be >= 0")
        rho[basis.index(label[0], int(label[1:])), basis.index(label[0], int(label[1:]))] = p
    total = np.trace(rho).real
    if abs(total - 1.0) > TRACE_TOL:
        raise ValueError(f"initial populations must sum to 1, got {total}")
    return rho


def check_states(states: np.ndarray) -> None:
    """Raise InvariantViolation unless every state is Hermitian, unit-trace and PSD."""
    states = np.asarray(states)
    herm = np.max(np.abs(states - np.conj(np.swapaxes(states, -1, -2))))
    if herm > HERMITIAN_TOL:
        raise InvariantViolation(f"density matrix not Hermitian (max deviation {herm:.3e})")
    tr = np.max(np.abs(np.trace(states, axis1=-2, axis2=-1) - 1.0))
    if tr > TRACE_TOL:
        raise InvariantViolation(f"trace deviates from 1 by {tr:.3e}")
    hermitised = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    min_eig = np.min(np.linalg.eigvalsh(hermitised))
    if min_eig < -POSITIVITY_TOL:
        raise InvariantViolation(f"density matrix not positive (min eigenvalue {min_eig:.3e})")


def uniform_step(times, rtol=1e-9) -> float:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ValueError("time grid needs at least two points")
    steps = np.diff(times)
    h = steps[0]
    if h <= 0 or np.any(steps <= 0):
        raise ValueError("time grid must be strictly increasing")
    if np.max(np.abs(steps - h)) > rtol * max(abs(times[-1]), h):
        raise ValueError("time grid must be uniform")
    return float(h)


def propagate(liouvillian: LiouvillianMatrix, rho0, times_ps, check: bool = True) -> np.ndarray:
    """Density matrices on a uniform grid (ps), shape (len(times), d, d).

    One propagator exp(L dt) is built and applied repeatedly; rho0 is the state
    at t = 0.
    """
    times = to_natural(times_ps)
    h = uniform_step(times)
    params = liouvillian.params
    if params.gamma_max * h > 0.5:
        raise StepTooLarge(
            f"step {h * HBAR:.4g} ps too large: Gamma_max*dt = {params.gamma_max * h:.3g} > 0.5"
        )
    d = liouvillian.basis.dim
    rho0 = np.asarray(rho0, dtype=complex)
    if check:
        check_states(rho0[None])
    step = expm(liouvillian.L * h)
    vec = expm(liouvillian.L * times[0]) @ rho0.reshape(d * d) if times[0] != 0 else rho0.reshape(d * d)
    out = np.empty((times.size, d * d), dtype=complex)
    for k in range(times.size):
        out[k] = vec
        vec = step @ vec
    states = out.reshape(times.size, d, d)
    if check:
        check_states(states)
    return states


# Component order of the expectation vector y used throughout:
# (sigma+ sigma-, sigma+ a, a^dag sigma-, a^dag a), i.e. <O_mu^dag A_i> with
# (mu, i) in (sigma,1), (sigma,2), (a,1), (a,2).
_Y_ENTRIES = (("e", 0, "e", 0), ("g", 1, "e", 0), ("e", 0, "g", 1), ("g", 1, "g", 1))


@dataclass
class ExpectationTrajectory:
    """Single-time expectation values on a uniform grid (times in ps).

    ``generator`` (natural units) is the closed linear map dy/dt = M y for the
    vector y = (n_tls, coh, coh_conj_pair, n_cav); when present it is used to
    evaluate the trajectory exactly between grid points.
    """

    times: np.ndarray
    n_cav: np.ndarray
    n_tls: np.ndarray
    coh: np.ndarray
    coh_conj_pair: np.ndarray
    generator: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def step_ps(self) -> float:
        return uniform_step(self.times)

    def vector(self) -> np.ndarray:
        """(N, 4) array in the (sigma,1), (sigma,2), (a,1), (a,2) order."""
        return np.stack([self.n_tls, self.coh, self.coh_conj_pair, self.n_cav], axis=-1)

    def source(self, params: SystemParams) -> np.ndarray:
        """kappa<a^dag a> + gamma<s+ s-> + 2 Re[gamma_F <s+ a>], ueV."""
        return (
            params.kappa * self.n_cav.real
            + params.gamma * self.n_tls.real
            + 2 * np.real(params.gamma_f * self.coh)
        )

    def at(self, t_ps) -> np.ndarray:
        """Expectation vector at arbitrary times inside the grid, shape (..., 4)."""
        t_ps = np.asarray(t_ps, dtype=float)
        t0, t1 = self.times[0], self.times[-1]
        h = self.step_ps
        if np.any(t_ps < t0 - 1e-9 * h) or np.any(t_ps > t1 + 1e-9 * h):
            raise OutOfTrajectory(f"requested times outside [{t0}, {t1}] ps")
        y = self.vector()
        pos = np.clip((t_ps - t0) / h, 0, self.times.size - 1)
        k = np.clip(np.floor(pos + 1e-9).astype(int), 0, self.times.size - 1)
        u = (pos - k) * h
        if self.generator is None:
            k1 = np.minimum(k + 1, self.times.size - 1)
            w = (u / h)[..., None]
            return (1 - w) * y[k] + w * y[k1]
        out = np.empty(t_ps.shape + (4,), dtype=complex)
        flat_k, flat_u = k.ravel(), u.ravel()
        flat = out.reshape(-1, 4)
        for j, (kk, uu) in enumerate(zip(flat_k, flat_u)):
            flat[j] = y[kk] if uu == 0 else expm(self.generator * to_natural(uu)) @ y[kk]
        return out


def expectations(states, times_ps, basis: Optional[Basis] = None, generator=None) -> ExpectationTrajectory:
    states = np.asarray(states)
    if states.ndim != 3 or states.shape[0] == 0:
        raise ValueError("expected a nonempty (N, d, d) stack of density matrices")
    if basis is None:
        basis = Basis(states.shape[1] // 2 - 1)
    ops = basis.observables()
    # Tr[X rho] = sum_ij X_ij rho_ji
    ev = {k: np.einsum("ij,kji->k", op, states) for k, op in ops.items()}
    return ExpectationTrajectory(
        times=np.asarray(times_ps, dtype=float),
        n_cav=ev["n_cav"].real.copy(),
        n_tls=ev["n_tls"].real.copy(),
        coh=ev["coh"],
        coh_conj_pair=ev["coh_conj_pair"],
        generator=generator,
    )


def expectation_generator(liouvillian: LiouvillianMatrix, tol: float = 1e-12) -> np.ndarray:
    """4x4 generator of y = (n_tls, coh, coh_conj_pair, n_cav), natural units.

    The single-excitation block {|e,0>, |g,1>} of rho evolves autonomously when
    the dynamics conserve excitation number; otherwise the map is not closed
    and ValueError is raised.
    """
    b = liouvillian.basis
    d = b.dim
    idx = [b.index(r, nr) * d + b.index(c, nc) for (r, nr, c, nc) in _Y_ENTRIES]
    sector = [b.index(*s) for s in (("g", 0), ("g", 1), ("e", 0))]
    entries = [r * d + c for r in sector for c in sector]
    outside = [k for k in range(d * d) if k not in entries]
    rest = [k for k in entries if k not in idx]
    L = liouvillian.L
    scale = max(np.max(np.abs(L)), 1.0)
    leak = max(
        np.max(np.abs(L[np.ix_(outside, entries)]), initial=0.0),
        np.max(np.abs(L[np.ix_(idx, rest)]), initial=0.0),
    )
    if leak > tol * scale:
        raise ValueError(
            "single-excitation block is not closed under this Liouvillian "
            f"(fano_ordering={liouvillian.fano_ordering!r})"
        )
    return L[np.ix_(idx, idx)].copy()


def simulate(
    params: SystemParams,
    times_ps,
    truncation: str = "n1",
    fano_ordering: str = DEFAULT_FANO_ORDERING,
    populations: Optional[dict] = None,
    check: bool = True,
):
    """Propagate the initially excited emitter; returns (states, trajectory)."""
    liou = build_liouvillian(params, truncation, fano_ordering)
    rho0 = initial_state(liou.basis, populations)
    states = propagate(liou, rho0, times_ps, check=check)
    gen = None
    # the 4x4 map only closes when no population starts outside {g0, g1, e0}
    if set(k for k, v in (populations or {"e0": 1.0}).items() if v > 0) <= {"g0", "g1", "e0"}:
        try:
            gen = expectation_generator(liou)
        except ValueError:
            gen = None
    return states, expectations(states, times_ps, liou.basis, generator=gen)
