"""Generalized linear models fitted by iteratively reweighted least squares.

``g(E[Y_i]) = x_i beta`` with the first column of the design matrix all ones.
Supported families are gaussian, poisson, gamma and binomial with identity,
log and logit links.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dimred import jacobi_eigh
from .errors import EmbedrateError, ParseError, ShapeError
from .nn import format_float

__all__ = [
    "GlmFamily",
    "DesignMatrix",
    "GlmModel",
    "GlmConvergenceError",
    "GlmRankError",
    "assemble_features",
    "glm_fit",
    "glm_predict",
    "deviance",
    "coefficient_report",
    "save_glm",
    "load_glm",
]

CANONICAL_LINKS = {"gaussian": "identity", "poisson": "log", "gamma": "log", "binomial": "logit"}
_ALLOWED_LINKS = {
    "gaussian": {"identity", "log"},
    "poisson": {"log", "identity"},
    "gamma": {"log", "identity"},
    "binomial": {"logit"},
}


class GlmConvergenceError(EmbedrateError, RuntimeError):
    """IRLS failed to converge or diverged; ``coefficients`` holds the last iterate."""

    def __init__(self, message, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


class GlmRankError(EmbedrateError, np.linalg.LinAlgError):
    """The weighted normal equations are singular."""


def _xlogx_ratio(a, b):
    """``a * log(a / b)`` with the convention 0 * log(0) = 0."""
    safe = np.where(a > 0, a, 1.0)
    return np.where(a > 0, a * np.log(safe / b), 0.0)


@dataclass(frozen=True)
class GlmFamily:
    kind: str
    link: Optional[str] = None

    def __post_init__(self):
        if self.kind not in CANONICAL_LINKS:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {sorted(CANONICAL_LINKS)}")
        if self.link is None:
            object.__setattr__(self, "link", CANONICAL_LINKS[self.kind])
        if self.link not in _ALLOWED_LINKS[self.kind]:
            raise ValueError(f"link {self.link!r} is not valid for the {self.kind} family")

    # link function and its inverse
    def linkfun(self, mu):
        if self.link == "identity":
            return mu
        if self.link == "log":
            return np.log(mu)
        return np.log(mu / (1.0 - mu))

    def linkinv(self, eta):
        if self.link == "identity":
            return eta
        if self.link == "log":
            return np.exp(eta)
        return 1.0 / (1.0 + np.exp(-eta))

    def dmu_deta(self, eta, mu):
        if self.link == "identity":
            return np.ones_like(eta)
        if self.link == "log":
            return mu
        return mu * (1.0 - mu)

    def variance(self, mu):
        if self.kind == "gaussian":
            return np.ones_like(mu)
        if self.kind == "poisson":
            return mu
        if self.kind == "gamma":
            return mu * mu
        return mu * (1.0 - mu)

    def unit_deviance(self, y, mu):
        if self.kind == "gaussian":
            return (y - mu) ** 2
        if self.kind == "poisson":
            return 2.0 * (_xlogx_ratio(y, mu) - (y - mu))
        if self.kind == "gamma":
            return 2.0 * (-np.log(y / mu) + (y - mu) / mu)
        return 2.0 * (_xlogx_ratio(y, mu) + _xlogx_ratio(1.0 - y, 1.0 - mu))

    def check_response(self, y):
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        if self.kind == "poisson" and np.any(y < 0):
            raise ValueError("poisson response must be non-negative")
        if self.kind == "gamma" and np.any(y <= 0):
            raise ValueError("gamma response must be positive")
        if self.kind == "binomial" and np.any((y != 0) & (y != 1)):
            raise ValueError("binomial response must be 0 or 1")

    def starting_mean(self, y):
        if self.kind == "poisson":
            return y + 0.5
        if self.kind == "binomial":
            return np.clip(y, 0.01, 0.99)
        if self.link == "log":
            return np.maximum(y, 0.01)
        return y.astype(np.float64)

    @property
    def fixed_dispersion(self) -> bool:
        return self.kind in ("poisson", "binomial")


@dataclass(frozen=True)
class DesignMatrix:
    """An n x (1+p) matrix whose first column is the intercept."""

    values: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] < 1:
            raise ShapeError(f"design matrix must be 2-D with an intercept, got {values.shape}")
        if not np.all(values[:, 0] == 1.0):
            raise ValueError("first design column must be all ones")
        names = list(self.names) or ["intercept"] + [f"x.{j}" for j in range(values.shape[1] - 1)]
        if len(names) != values.shape[1]:
            raise ShapeError(f"{len(names)} column names for {values.shape[1]} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def shape(self):
        return self.values.shape

    def rows(self, idx):
        return DesignMatrix(self.values[idx], self.names)


def assemble_features(blocks, n_rows=None) -> DesignMatrix:
    """Concatenate named feature blocks behind an intercept column.

    Parameters
    ----------
    blocks : list of (name, array-like n x w)
        Columns are named ``"<name>.<j>"``.
    n_rows : int, optional
        Needed only when ``blocks`` is empty.
    """
    names = ["intercept"]
    arrays = []
    seen = set()
    for name, block in blocks:
        if name in seen:
            raise ValueError(f"duplicate block name {name!r}")
        seen.add(name)
        arr = np.asarray(block, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if n_rows is None:
            n_rows = arr.shape[0]
        if arr.shape[0] != n_rows:
            raise ShapeError(f"block {name!r} has {arr.shape[0]} rows, expected {n_rows}")
        arrays.append(arr)
        names.extend(f"{name}.{j}" for j in range(arr.shape[1]))
    if n_rows is None:
        raise ValueError("n_rows is required when no blocks are given")
    values = np.hstack([np.ones((n_rows, 1))] + arrays)
    return DesignMatrix(values, names)


@dataclass(frozen=True)
class GlmModel:
    family: GlmFamily
    coefficients: np.ndarray
    covariance: np.ndarray
    deviance: float
    iterations: int
    dispersion: float
    names: list

    @property
    def std_errors(self):
        return np.sqrt(np.diag(self.covariance))


def _as_design(x):
    return x if isinstance(x, DesignMatrix) else DesignMatrix(x)


def _solve_spd(a, b, what="weighted normal equations"):
    """Solve ``a @ x = b`` for symmetric ``a``; also return ``inv(a)``."""
    values, vectors, _ = jacobi_eigh(a)
    top = values.max(initial=0.0)
    if top <= 0 or values.min() <= 1e-12 * top:
        raise GlmRankError(f"{what} are singular (eigenvalue ratio "
                           f"{values.min() / top if top > 0 else 0.0:.3g})")
    inv = (vectors / values) @ vectors.T
    return inv @ b, inv


def glm_fit(x, y, family: GlmFamily, offset=None, max_iter: int = 25, tol: float = 1e-8) -> GlmModel:
    """Maximum likelihood fit by IRLS.

    Stops when ``|dev - dev_old| / (|dev| + 0.1) < tol`` and the last
    coefficient step is below ``1e-5 * (1 + max|beta|)``. The covariance is
    the inverse Fisher information at the estimate, scaled by the Pearson
    dispersion for gaussian and gamma families.

    Raises
    ------
    GlmRankError
        Singular weighted normal equations.
    GlmConvergenceError
        No convergence within ``max_iter`` iterations, or divergence of the
        linear predictor (e.g. a constant binomial response).
    """
    design = _as_design(x)
    X = design.values
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n, k = X.shape
    if y.size != n:
        raise ShapeError(f"{n} design rows but {y.size} responses")
    if n <= k:
        raise ValueError(f"need more rows ({n}) than columns ({k})")
    family.check_response(y)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=np.float64).reshape(-1)
    if off.size != n:
        raise ShapeError(f"offset has {off.size} entries, expected {n}")

    mu = family.starting_mean(y)
    eta = family.linkfun(mu)
    dev_old = float(np.sum(family.unit_deviance(y, mu)))
    beta = np.zeros(k)
    exact_one_step = family.kind == "gaussian" and family.link == "identity"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = family.dmu_deta(eta, mu)
        w = d * d / family.variance(mu)
        z = eta - off + (y - mu) / d
        xtw = X.T * w
        beta_old = beta
        beta, _ = _solve_spd(xtw @ X, xtw @ z)
        step = float(np.max(np.abs(beta - beta_old))) if it > 1 else np.inf
        eta = X @ beta + off
        if not np.all(np.isfinite(eta)) or (family.link != "identity" and np.abs(eta).max() > 30.0):
            raise GlmConvergenceError(
                "IRLS diverged: linear predictor is unbounded "
                "(fitted means approach the edge of the family's range)", beta)
        mu = family.linkinv(eta)
        if family.link == "identity" and family.kind in ("poisson", "gamma") and np.any(mu <= 0):
            raise GlmConvergenceError("identity link produced non-positive fitted means", beta)
        dev = float(np.sum(family.unit_deviance(y, mu)))
        # a small deviance change alone is not enough: when the MLE lies on the
        # boundary (e.g. an all-zero response) the deviance flattens towards 0
        # while the coefficients keep drifting by O(1) per iteration
        settled = step <= 1e-5 * (1.0 + float(np.max(np.abs(beta))))
        if exact_one_step or (abs(dev - dev_old) / (abs(dev) + 0.1) < tol and settled):
            converged = True
            break
        dev_old = dev
    if not converged:
        raise GlmConvergenceError(f"IRLS did not converge in {max_iter} iterations", beta)

    d = family.dmu_deta(eta, mu)
    w = d * d / family.variance(mu)
    xtw = X.T * w
    _, inv_fisher = _solve_spd(xtw @ X, np.zeros(k), "Fisher information")
    if family.fixed_dispersion:
        phi = 1.0
    else:
        phi = float(np.sum((y - mu) ** 2 / family.variance(mu)) / (n - k))
    cov = phi * inv_fisher
    return GlmModel(family=family, coefficients=beta, covariance=0.5 * (cov + cov.T), deviance=dev,
                    iterations=it, dispersion=phi, names=list(design.names))


def glm_predict(model: GlmModel, x, offset=None) -> np.ndarray:
    """Fitted means ``g^-1(x beta + offset)``."""
    X = _as_design(x).values
    if X.shape[1] != model.coefficients.size:
        raise ShapeError(f"design has {X.shape[1]} columns, model expects {model.coefficients.size}")
    eta = X @ model.coefficients
    if offset is not None:
        eta = eta + np.asarray(offset, dtype=np.float64).reshape(-1)
    return model.family.linkinv(eta)


def deviance(model: GlmModel, x, y, offset=None) -> float:
    """Family deviance of ``model`` on ``(x, y)``."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    model.family.check_response(y)
    mu = glm_predict(model, x, offset)
    if mu.size != y.size:
        raise ShapeError(f"{mu.size} predictions but {y.size} responses")
    return float(np.sum(model.family.unit_deviance(y, mu)))


def coefficient_report(model: GlmModel) -> str:
    """Human-readable table: name, estimate, standard error."""
    width = max(len(n) for n in model.names)
    lines = [f"family: {model.family.kind} (link {model.family.link})",
             f"deviance: {format_float(model.deviance)}",
             f"dispersion: {format_float(model.dispersion)}",
             f"iterations: {model.iterations}",
             f"{'name':<{width}}  {'estimate':>24}  {'std_error':>24}"]
    for name, est, se in zip(model.names, model.coefficients, model.std_errors):
        lines.append(f"{name:<{width}}  {format_float(est):>24}  {format_float(se):>24}")
    return "\n".join(lines) + "\n"


def save_glm(model: GlmModel, path) -> None:
    lines = [
        "embedrate-glm 1",
        f"family {model.family.kind}",
        f"link {model.family.link}",
        f"iterations {model.iterations}",
        f"deviance {format_float(model.deviance)}",
        f"dispersion {format_float(model.dispersion)}",
        "names " + " ".join(model.names),
        "coefficients " + " ".join(format_float(v) for v in model.coefficients),
    ]
    lines += ["covariance " + " ".join(format_float(v) for v in row) for row in model.covariance]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_glm(path) -> GlmModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "embedrate-glm 1":
        raise ParseError("not an embedrate GLM file", 1)
    fields = {}
    cov = []
    for no, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        if key == "covariance":
            cov.append([float(v) for v in rest.split()])
        elif key:
            fields[key] = rest
    try:
        family = GlmFamily(fields["family"], fields["link"])
        coef = np.array([float(v) for v in fields["coefficients"].split()])
        return GlmModel(family=family, coefficients=coef, covariance=np.array(cov).reshape(coef.size, coef.size),
                        deviance=float(fields["deviance"]), iterations=int(fields["iterations"]),
                        dispersion=float(fields["dispersion"]), names=fields["names"].split())
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed GLM file: {exc}") from None
