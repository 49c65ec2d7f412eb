"""Finite-difference checks for the shape-comparison backward passes."""

from dataclasses import dataclass, field

import numpy as np

from kinshape import grassmann, kernels
from kinshape.errors import DegenerateSpectrumError


def central_difference(f, x, h):
    """Central-difference gradient of scalar ``f`` at array ``x`` (step ``h``)."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = f(x)
        flat[idx] = orig - h
        fm = f(x)
        flat[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(actual, reference, floor=1e-12):
    """``max|actual - reference| / max|reference|`` (max-norm relative error)."""
    actual = np.asarray(actual)
    reference = np.asarray(reference)
    scale = max(float(np.max(np.abs(reference))), floor)
    return float(np.max(np.abs(actual - reference)) / scale)


def random_shape(rng, m, min_ratio=0.1):
    """Gaussian m x 2 shape with d2/d1 >= ``min_ratio`` after centring."""
    while True:
        s = rng.standard_normal((m, 2))
        d = np.linalg.svd(s - s.mean(axis=0), compute_uv=False)
        if d[1] / d[0] >= min_ratio:
            return s


def fd_shape_grads(s0, s1, upstream, *, center=True, rel_step=1e-6):
    """Finite-difference gradients of ``sum(upstream * B(s0, s1))`` w.r.t. both shapes."""
    h0 = rel_step * max(1.0, float(np.max(np.abs(s0))))
    h1 = rel_step * max(1.0, float(np.max(np.abs(s1))))

    def loss0(x):
        return float(np.sum(upstream * grassmann.aisc_forward(x, s1, center=center)))

    def loss1(x):
        return float(np.sum(upstream * grassmann.aisc_forward(s0, x, center=center)))

    return central_difference(loss0, s0, h0), central_difference(loss1, s1, h1)


def denominator_check(svd, points, *, rel_step=1e-6):
    """Max-norm relative error of the U-Jacobian for both denominator forms.

    Returns ``{"minus": err, "plus": err}`` against central differences of the
    thin-SVD ``U`` factor over every entry of ``points``.
    """
    m, k = points.shape
    h = rel_step * max(1.0, float(np.max(np.abs(points))))
    errs = {}
    for form in ("minus", "plus"):
        worst = 0.0
        for i in range(m):
            for j in range(k):
                e = np.zeros_like(points)
                e[i, j] = h
                fd = (kernels.thin_svd(points + e).u - kernels.thin_svd(points - e).u) / (2 * h)
                worst = max(worst, relative_error(grassmann.u_jacobian(svd, i, j, denominator=form), fd))
        errs[form] = worst
    return errs


@dataclass
class GradcheckSummary:
    trials: int = 0
    svd_fd_error: float = 0.0
    projector_fd_error: float = 0.0
    path_agreement: float = 0.0
    denominator_errors: dict = field(default_factory=dict)
    skipped_degenerate: int = 0
    tolerance_fd: float = 1e-4
    tolerance_paths: float = 1e-8

    @property
    def denominator_form(self):
        if not self.denominator_errors:
            return None
        return min(self.denominator_errors, key=self.denominator_errors.get)

    @property
    def passed(self):
        return (
            self.trials > 0
            and self.svd_fd_error < self.tolerance_fd
            and self.projector_fd_error < self.tolerance_fd
            and self.path_agreement < self.tolerance_paths
        )

    def rows(self):
        return [
            ("svd_vs_fd", self.svd_fd_error, self.tolerance_fd),
            ("projector_vs_fd", self.projector_fd_error, self.tolerance_fd),
            ("svd_vs_projector", self.path_agreement, self.tolerance_paths),
        ]


def run_gradcheck(seed=0, m_values=(5, 10, 68), trials=100, *, center=True, denominator_trials=5):
    """Compare both backward paths with finite differences on random pairs.

    Pair ``t`` uses ``m = m_values[t % len(m_values)]`` and a random symmetric
    upstream gradient. Shapes whose spectrum is too degenerate for the SVD path
    are counted in ``skipped_degenerate`` and excluded.
    """
    rng = np.random.default_rng(seed)
    out = GradcheckSummary()
    denom = {"minus": 0.0, "plus": 0.0}
    for t in range(trials):
        m = m_values[t % len(m_values)]
        s0 = random_shape(rng, m)
        s1 = random_shape(rng, m)
        g = rng.standard_normal((m, m))
        upstream = g + g.T
        try:
            svd0, svd1 = grassmann.aisc_backward_svd(s0, s1, upstream, center=center)
        except DegenerateSpectrumError:
            out.skipped_degenerate += 1
            continue
        proj0, proj1 = grassmann.aisc_backward_projector(s0, s1, upstream, center=center)
        fd0, fd1 = fd_shape_grads(s0, s1, upstream, center=center)
        out.svd_fd_error = max(out.svd_fd_error, relative_error(svd0, fd0), relative_error(svd1, fd1))
        out.projector_fd_error = max(
            out.projector_fd_error, relative_error(proj0, fd0), relative_error(proj1, fd1)
        )
        out.path_agreement = max(
            out.path_agreement, relative_error(svd0, proj0), relative_error(svd1, proj1)
        )
        if t < denominator_trials:
            decomp = grassmann.shape_to_projector(s0, center=False)
            for form, err in denominator_check(decomp.svd, decomp.points).items():
                denom[form] = max(denom[form], err)
        out.trials += 1
    if denominator_trials:
        out.denominator_errors = denom
    return out
