"""Finite-difference oracle for every hand-derived pullback in the package.

Central differences with coordinate-wise step h_k = h_scale * (1 + |x_k|)
give an implementation-independent vector-Jacobian product; fd_check reports
the worst relative deviation between that and an analytic pullback.  The
registry at the bottom wires up one check per registered pullback so the CLI
and the test suite exercise the same list.
"""

from __future__ import annotations

import numpy as np

from . import transforms as tf

DEFAULT_TOL = 1e-5


def _eval_rows(fun, rows, batched):
    if batched:
        out = np.asarray(fun(rows), dtype=float)
        return out.reshape(rows.shape[0], -1)
    return np.stack([np.atleast_1d(np.asarray(fun(r), dtype=float)).ravel() for r in rows])


def fd_jacobian(fun, x, h_scale=1e-6, batched=True):
    """J[i, j] = d f_i / d x_j by central differences."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = h_scale * (1.0 + np.abs(x))
    steps = np.diag(h)
    rows = np.concatenate([x + steps, x - steps], axis=0)
    vals = _eval_rows(fun, rows, batched)
    return ((vals[:n] - vals[n:]) / (2.0 * h[:, None])).T


def fd_vjp(fun, x, cotangent, h_scale=1e-5, batched=True):
    """cotangent^T J by central differences, one derivative per coordinate."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(cotangent, dtype=float).ravel()
    n = x.size
    h = h_scale * (1.0 + np.abs(x))
    steps = np.diag(h)
    rows = np.concatenate([x + steps, x - steps], axis=0)
    vals = _eval_rows(fun, rows, batched)
    diffs = (vals[:n] - vals[n:]) / (2.0 * h[:, None])
    return diffs @ g


def fd_check(fun, x, cotangent, pullback, h_scale=1e-5, batched=True):
    """Worst per-coordinate relative deviation of pullback from the FD oracle.

    The deviation is |fd_k - vjp_k| / (1 + max(|fd_k|, |vjp_k|)), so it reads
    as an absolute error for small entries and a relative one for large.
    """
    fd = fd_vjp(fun, x, cotangent, h_scale=h_scale, batched=batched)
    vjp = np.asarray(pullback(x, cotangent), dtype=float).ravel()
    if fd.shape != vjp.shape:
        raise ValueError(f"pullback shape {vjp.shape} does not match point shape {fd.shape}")
    denom = 1.0 + np.maximum(np.abs(fd), np.abs(vjp))
    return float(np.max(np.abs(fd - vjp) / denom))


# ---------------------------------------------------------------------------
# Registry of every pullback the package ships.


class PullbackCase:
    """One registered pullback plus a sampler for admissible test points."""

    __slots__ = ("name", "fun", "pullback", "point", "cotangent_dim", "batched")

    def __init__(self, name, fun, pullback, point, cotangent_dim, batched=True):
        self.name = name
        self.fun = fun
        self.pullback = pullback
        self.point = point
        self.cotangent_dim = cotangent_dim
        self.batched = batched


def _margin_point(rng, n, margin=1e-3):
    """Random y whose stick vector stays clear of argmax ties, so finite
    differences never straddle the vertex-projection boundary."""
    while True:
        y = rng.normal(size=n)
        wc = tf.completed(tf.stick_break(tf._sigmoid(y)))
        top = np.sort(wc)[-2:]
        if top[1] - top[0] > margin:
            return y


def _chain_cases(rng):
    specs = [
        ("softmaxpp", tf.TransformSpec(tf.SOFTMAX_PP), 0.73),
        ("softmaxpp-delta2", tf.TransformSpec(tf.SOFTMAX_PP, delta=2.0), 0.5),
        ("sb-softmaxpp", tf.TransformSpec(tf.SB_SOFTMAX_PP), 0.73),
        ("sb-interp", tf.TransformSpec(tf.SB_INTERP), 0.6),
        ("sb-identity", tf.TransformSpec(tf.SB_IDENTITY), 1.0),
    ]
    n = 4
    layers = tuple(
        tf.PlanarLayer(w=rng.normal(size=n), u=rng.normal(size=n) * 0.5, b=float(rng.normal()))
        for _ in range(2)
    )
    specs.append(("planar-softmaxpp", tf.TransformSpec(tf.PLANAR_SOFTMAX_PP, layers=layers), 0.73))
    cases = []
    for name, spec, tau in specs:
        def fun(Y, spec=spec, tau=tau):
            return tf.forward(spec, Y, tau).z

        def pb(y, g, spec=spec, tau=tau):
            return tf.pullback(spec, y, tau, g)

        def point(rng, spec=spec):
            if spec.kind == tf.SB_INTERP:
                return _margin_point(rng, n)
            return rng.normal(size=n)

        cases.append(PullbackCase(name, fun, pb, point, n))
    return cases


def _planar_layer_case(rng):
    n = 4
    layer = tf.PlanarLayer(w=rng.normal(size=n), u=rng.normal(size=n), b=float(rng.normal()))

    def fun(Y):
        return tf.planar_forward((layer,), Y)[0]

    def pb(y, g):
        return tf.planar_vjp((layer,), y, g)

    return PullbackCase("planar-layer", fun, pb, lambda rng: rng.normal(size=n), n)


def _clamp_case():
    from . import recovery

    m = 3

    def fun(theta):
        theta = np.asarray(theta)
        mu, sigma = recovery.clamp_params(theta[..., :m], theta[..., m:])
        return np.concatenate([mu, sigma], axis=-1)

    def pb(theta, g):
        g = np.asarray(g)
        dmu, dsig = recovery.clamp_params_vjp(theta[:m], theta[m:], g[:m], g[m:])
        return np.concatenate([dmu, dsig])

    return PullbackCase("clamp-params", fun, pb, lambda rng: rng.normal(size=2 * m), 2 * m)


def _quad_case():
    from . import recovery

    m = 4

    def fun(theta):
        return recovery.recover_pmf_quad(theta[:m], theta[m:]).probs

    def pb(theta, g):
        dmu, dsig = recovery.quad_pmf_vjp(theta[:m], theta[m:], g)
        return np.concatenate([dmu, dsig])

    def point(rng):
        mu = rng.uniform(-4.5, 4.5, m)
        sigma = rng.uniform(0.6, 2.4, m)
        return np.concatenate([mu, sigma])

    return PullbackCase("quad-recovery", fun, pb, point, m + 1, batched=False)


def _moment_match_case(rng):
    from . import estimators

    n = 4
    spec = tf.TransformSpec(tf.SOFTMAX_PP)
    tau = 0.6
    target = rng.dirichlet(np.ones(n + 1))
    eps = rng.normal(size=(8, n))

    def fun(theta):
        theta = np.asarray(theta)
        return estimators.mm_loss_and_grad(theta[:n], theta[n:], tau, spec, target, eps)[0]

    def pb(theta, g):
        _, gmu, gsig = estimators.mm_loss_and_grad(theta[:n], theta[n:], tau, spec, target, eps)
        return float(np.asarray(g).ravel()[0]) * np.concatenate([gmu, gsig])

    def point(rng):
        return np.concatenate([rng.normal(size=n) * 0.5, rng.uniform(0.5, 1.5, n)])

    return PullbackCase("moment-match-loss", fun, pb, point, 1, batched=False)


def _gs_case(rng):
    from . import estimators

    k = 4
    tau = 0.8
    eps = rng.gumbel(size=k)

    def fun(eta):
        return estimators.gs_path(np.asarray(eta), eps, tau)

    def pb(eta, g):
        return estimators.gs_path_vjp(np.asarray(eta), eps, tau, g)

    return PullbackCase("gs-sampler-path", fun, pb, lambda rng: rng.normal(size=k), k)


def pullback_registry(seed=0):
    """Every pullback the package ships, each with an admissible point sampler."""
    rng = np.random.default_rng(seed)
    cases = _chain_cases(rng)
    cases.append(_planar_layer_case(rng))
    cases.append(_clamp_case())
    cases.append(_quad_case())
    cases.append(_moment_match_case(rng))
    cases.append(_gs_case(rng))
    return cases


def run_pullback_checks(n_points=20, seed=0):
    """Run fd_check at n_points random points per registered pullback.

    Returns a list of (name, worst_error) pairs.
    """
    rng = np.random.default_rng(seed)
    results = []
    for case in pullback_registry(seed):
        worst = 0.0
        for _ in range(n_points):
            x = case.point(rng)
            g = rng.normal(size=case.cotangent_dim)
            worst = max(worst, fd_check(case.fun, x, g, case.pullback, batched=case.batched))
        results.append((case.name, worst))
    return results
