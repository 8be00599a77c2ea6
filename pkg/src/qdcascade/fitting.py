"""Weighted least squares via a damped Gauss-Newton (Levenberg) scheme.

Small, dependency-free fitter for the line shapes this package needs.  The
damping parameter grows tenfold on a rejected step and shrinks tenfold on an
accepted one; convergence is declared when the relative step falls below
1e-10, and failure to converge within the iteration budget raises with the
last iterate attached.  Parameter errors come from the inverse curvature at
the optimum, scaled by the reduced chi-square when no measurement errors are
supplied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEP_TOL = 1e-10
MAX_ITER = 200


class FitNonConvergence(RuntimeError):
    def __init__(self, message, last_result):
        super().__init__(message)
        self.last_result = last_result


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    errors: np.ndarray
    residual_norm: float
    n_iter: int
    converged: bool
    names: tuple = ()

    def __getitem__(self, name):
        return float(self.params[self.names.index(name)])

    def error(self, name):
        return float(self.errors[self.names.index(name)])


def _numeric_jacobian(f, x, p):
    base = f(x, p)
    jac = np.empty((x.size, p.size))
    for k in range(p.size):
        h = 1e-7 * max(1.0, abs(p[k]))
        pk = p.copy()
        pk[k] += h
        jac[:, k] = (f(x, pk) - base) / h
    return jac


def fit_model(f, x, y, p0, *, yerr=None, jac=None, names=(), max_iter=MAX_ITER, step_tol=STEP_TOL) -> FitResult:
    """Fit y = f(x, p) by damped Gauss-Newton in the weighted norm."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p0, dtype=float).copy()
    if yerr is None:
        w = np.ones_like(y)
    else:
        w = 1.0 / np.asarray(yerr, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("yerr must be positive and finite")

    def cost(params):
        r = (y - f(x, params)) * w
        return float(r @ r), r

    lam = 1e-3
    c_cur, r_cur = cost(p)
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iter + 1):
        jmat = jac(x, p) if jac is not None else _numeric_jacobian(f, x, p)
        jw = jmat * w[:, None]
        g = jw.T @ r_cur
        h = jw.T @ jw
        accepted = False
        step = np.zeros_like(p)
        for _ in range(40):
            try:
                step = np.linalg.solve(h + lam * np.diag(np.diag(h)) + 1e-300 * np.eye(p.size), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            c_new, r_new = cost(p + step)
            if np.isfinite(c_new) and c_new <= c_cur:
                p = p + step
                c_cur, r_cur = c_new, r_new
                lam = max(lam / 10.0, 1e-14)
                accepted = True
                break
            lam *= 10.0
        rel_step = np.linalg.norm(step) / max(np.linalg.norm(p), 1e-300)
        if accepted and rel_step < step_tol:
            converged = True
            break
        if not accepted:
            break

    jmat = jac(x, p) if jac is not None else _numeric_jacobian(f, x, p)
    jw = jmat * w[:, None]
    h = jw.T @ jw
    try:
        cov = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.nan)
    dof = max(1, y.size - p.size)
    if yerr is None:
        cov = cov * (c_cur / dof)
    errors = np.sqrt(np.abs(np.diag(cov)))
    result = FitResult(p, errors, float(np.sqrt(c_cur)), n_iter, converged, tuple(names))
    if not converged:
        raise FitNonConvergence(f"no convergence after {n_iter} iterations", result)
    return result


# -- Lorentzian line ------------------------------------------------------------


def lorentzian(x, p):
    """offset + amplitude * (w/2)^2 / ((x-center)^2 + (w/2)^2)."""
    center, fwhm, amplitude, offset = p
    hw = fwhm / 2.0
    return offset + amplitude * hw**2 / ((x - center) ** 2 + hw**2)


def lorentzian_jacobian(x, p):
    center, fwhm, amplitude, offset = p
    hw = fwhm / 2.0
    d = x - center
    den = d**2 + hw**2
    jac = np.empty((x.size, 4))
    jac[:, 0] = amplitude * hw**2 * 2.0 * d / den**2
    jac[:, 1] = amplitude * hw * d**2 / den**2  # d/dfwhm = (1/2) d/dhw
    jac[:, 2] = hw**2 / den
    jac[:, 3] = 1.0
    return jac


def fit_lorentzian(x, y, yerr=None) -> FitResult:
    """Lorentzian fit with named parameters (center, fwhm, amplitude, offset).

    Requires at least 5 points.  Initial guesses come from the data extremes
    and the half-maximum span.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise ValueError("need at least 5 points to fit a Lorentzian")
    offset0 = float(np.min(y))
    amp0 = float(np.max(y) - offset0)
    if amp0 <= 0:
        amp0 = max(1e-12, float(np.std(y)))
    center0 = float(x[int(np.argmax(y))])
    above = x[y > offset0 + amp0 / 2.0]
    fwhm0 = float(above.max() - above.min()) if above.size > 1 else float((x.max() - x.min()) / 4.0)
    fwhm0 = max(fwhm0, float(np.min(np.diff(np.sort(x)))) * 2.0)
    res = fit_model(
        lorentzian,
        x,
        y,
        np.array([center0, fwhm0, amp0, offset0]),
        yerr=yerr,
        jac=lorentzian_jacobian,
        names=("center", "fwhm", "amplitude", "offset"),
    )
    params = res.params.copy()
    params[1] = abs(params[1])
    return FitResult(params, res.errors, res.residual_norm, res.n_iter, res.converged, res.names)


# -- damped beat (two-color interference trace) ---------------------------------


def beat_model(t, p):
    """amplitude * exp(-t/tau) * (1 + visibility cos(2 pi f t + phase)) + offset."""
    amplitude, tau, visibility, freq, phase, offset = p
    return offset + amplitude * np.exp(-t / tau) * (1.0 + visibility * np.cos(2.0 * np.pi * freq * t + phase))


def fit_beat(t, y, p0, yerr=None) -> FitResult:
    names = ("amplitude", "tau", "visibility", "freq", "phase", "offset")
    return fit_model(beat_model, np.asarray(t, float), np.asarray(y, float), np.asarray(p0, float), yerr=yerr, names=names)
