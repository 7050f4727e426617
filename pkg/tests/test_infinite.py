import numpy as np
import pytest
from scipy.special import expit

from igr import infinite as inf
from igr import transforms as tf
from igr.errors import RunawayTruncationError


def _params(kind=tf.SB_SOFTMAX_PP, tau=0.3, rho=0.99, mu=(), sigma=(), cap=inf.HARD_CAP):
    return inf.GrowableIgrParams(
        tau=tau, rho=rho, spec=tf.TransformSpec(kind), mu=mu, sigma=sigma, cap=cap
    )


def _prefix_masses(w, tau, delta, kind):
    """Cumulative completed mass after each coordinate, recomputed directly."""
    if kind == tf.SB_SOFTMAX_PP:
        s = np.cumsum(np.exp(w / tau))
        return s / (s + delta)
    return np.cumsum(w)


# ---------------------------------------------------------------------------
# Growable parameter store


def test_materialize_defaults_and_high_water():
    params = _params(mu=(0.5,), sigma=(0.8,))
    assert params.high_water == 1
    params.materialize(4)
    assert params.high_water == 4
    np.testing.assert_array_equal(params.mu, [0.5, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(params.sigma, [0.8, 1.0, 1.0, 1.0])
    params.materialize(2)  # never shrinks
    assert params.high_water == 4


def test_prefix_returns_finite_params():
    params = _params(mu=(0.5, -0.2, 0.1), sigma=(1.0, 1.1, 0.9))
    pre = params.prefix(2)
    np.testing.assert_array_equal(pre.mu, [0.5, -0.2])
    assert pre.tau == params.tau and pre.spec == params.spec


def test_growable_json_roundtrip():
    params = _params(mu=(0.5, -0.2), sigma=(1.0, 1.1))
    back = inf.GrowableIgrParams.from_json(params.to_json())
    np.testing.assert_array_equal(back.mu, params.mu)
    np.testing.assert_array_equal(back.sigma, params.sigma)
    assert back.rho == params.rho and back.tau == params.tau


# ---------------------------------------------------------------------------
# Lazy truncated sampling: stopping rule


@pytest.mark.parametrize("kind", [tf.SB_SOFTMAX_PP, tf.SB_IDENTITY])
def test_stopping_rule_double_inequality_exact(kind):
    rng = np.random.default_rng(0)
    params = _params(kind, tau=0.3, rho=0.99)
    for _ in range(200):
        out = inf.sample_truncated(params, rng)
        masses = _prefix_masses(
            out.trace.w, params.tau, params.spec.delta, kind
        )
        assert masses[out.k_used - 1] > params.rho
        if out.k_used > 1:
            assert masses[out.k_used - 2] <= params.rho
        # captured mass exceeds rho per draw
        assert masses[-1] > 0.99


def test_tiny_rho_stops_at_first_coordinate():
    params = _params(tf.SB_IDENTITY, rho=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(50):
        assert inf.sample_truncated(params, rng).k_used == 1


def test_left_heavy_parameters_stop_early():
    # mu positive early (sigmoid near 1), strongly negative later: the chain
    # puts nearly all mass on the first coordinates
    params = _params(
        tf.SB_IDENTITY,
        rho=0.99,
        mu=(6.0, 6.0, 6.0, 6.0, 6.0, -10.0, -10.0, -10.0),
        sigma=(0.5,) * 8,
    )
    rng = np.random.default_rng(2)
    ks = np.array([inf.sample_truncated(params, rng).k_used for _ in range(1000)])
    assert (ks <= 6).mean() >= 0.99


def test_mean_k_used_monotone_in_rho():
    ks = {}
    for rho in (0.9, 0.999):
        params = _params(tf.SB_SOFTMAX_PP, tau=0.3, rho=rho)
        draws = [
            inf.sample_truncated(params, np.random.default_rng(100 + i)).k_used
            for i in range(1000)
        ]
        ks[rho] = np.mean(draws)
    assert ks[0.9] <= ks[0.999]


def test_determinism_same_seed_same_trace():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.3)
    a = inf.sample_truncated(params, np.random.default_rng(7))
    b = inf.sample_truncated(params, np.random.default_rng(7))
    assert a.k_used == b.k_used
    np.testing.assert_array_equal(a.trace.y, b.trace.y)
    np.testing.assert_array_equal(a.trace.z.coords, b.trace.z.coords)


def test_hard_cap_triggers_runaway_error():
    # every stick tiny: cumulative mass cannot reach rho within the cap
    params = _params(tf.SB_IDENTITY, rho=0.999, mu=(-8.0,), sigma=(0.1,), cap=64)
    params.materialize(64)
    params.mu[:] = -8.0
    params.sigma[:] = 0.1
    with pytest.raises(RunawayTruncationError):
        inf.sample_truncated(params, np.random.default_rng(3))


def test_gradient_coords_is_prefix_range():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.3)
    out = inf.sample_truncated(params, np.random.default_rng(4))
    assert list(inf.gradient_coords(out)) == list(range(out.k_used))


def test_trace_consistent_with_chain_forward():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.4)
    out = inf.sample_truncated(params, np.random.default_rng(5))
    tr = out.trace
    res = tf.forward(params.spec, tr.y, params.tau)
    np.testing.assert_allclose(tr.z.coords, res.z, rtol=1e-12)
    np.testing.assert_allclose(tr.log_det_jac, res.log_det_jac, rtol=1e-12)


# ---------------------------------------------------------------------------
# Batched truncated sampling


@pytest.mark.parametrize("kind", [tf.SB_SOFTMAX_PP, tf.SB_IDENTITY])
def test_batch_rows_satisfy_stopping_rule(kind):
    params = _params(kind, tau=0.3, rho=0.99)
    batch = inf.sample_truncated_batch(params, np.random.default_rng(8), 300)
    assert batch.w.shape[1] == batch.k_used.max()
    for i in range(300):
        k = batch.k_used[i]
        w = batch.w[i, :k]
        masses = _prefix_masses(w, params.tau, params.spec.delta, kind)
        assert masses[k - 1] > params.rho
        if k > 1:
            assert masses[k - 2] <= params.rho
        # padding beyond k_used is zeroed and masked out
        assert not batch.mask[i, k:].any()
        np.testing.assert_array_equal(batch.w[i, k:], 0.0)


def test_batch_k_used_distribution_matches_single():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.3, rho=0.99)
    singles = np.array(
        [inf.sample_truncated(params, np.random.default_rng(10_000 + i)).k_used
         for i in range(2000)]
    )
    batch = inf.sample_truncated_batch(params, np.random.default_rng(11), 2000)
    se = np.sqrt(singles.var(ddof=1) / 2000 + batch.k_used.var(ddof=1) / 2000)
    assert abs(singles.mean() - batch.k_used.mean()) < 4.0 * se


def test_batch_z_matches_masked_softmaxpp():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.3, rho=0.99)
    batch = inf.sample_truncated_batch(params, np.random.default_rng(12), 100)
    for i in range(100):
        k = batch.k_used[i]
        z_row = tf.softmax_pp(batch.w[i, :k], params.tau, params.spec.delta)
        np.testing.assert_allclose(batch.z[i, :k], z_row, rtol=1e-10)


def test_batch_determinism():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.3)
    a = inf.sample_truncated_batch(params, np.random.default_rng(13), 50)
    b = inf.sample_truncated_batch(params, np.random.default_rng(13), 50)
    np.testing.assert_array_equal(a.k_used, b.k_used)
    np.testing.assert_array_equal(a.w, b.w)


def test_batch_hard_cap_triggers_runaway_error():
    params = _params(tf.SB_IDENTITY, rho=0.999, cap=64)
    params.materialize(64)
    params.mu[:] = -8.0
    params.sigma[:] = 0.1
    with pytest.raises(RunawayTruncationError):
        inf.sample_truncated_batch(params, np.random.default_rng(14), 10)


# ---------------------------------------------------------------------------
# Truncated recovery


def test_recover_concentrated_on_category_two():
    # u1, u2 tiny, u3 near 1: nearly every draw discretizes to category 2
    params = _params(
        tf.SB_SOFTMAX_PP,
        tau=0.1,
        rho=0.9,
        mu=(-6.0, -6.0, 6.0, -6.0),
        sigma=(0.3,) * 4,
    )
    pmf = inf.recover_pmf_truncated(params, 5000, np.random.default_rng(15))
    assert pmf.kind == "truncated-infinite"
    assert pmf.probs[2] > 0.99
    np.testing.assert_allclose(pmf.probs.sum() + pmf.tail_mass, 1.0, rtol=1e-12)


def test_recover_partition_sums_to_one_exactly():
    params = _params(tf.SB_SOFTMAX_PP, tau=0.3, rho=0.99)
    pmf = inf.recover_pmf_truncated(params, 4000, np.random.default_rng(16))
    assert pmf.probs.sum() + pmf.tail_mass == 1.0


def test_recover_truncated_sb_softmaxpp_draws_always_concrete():
    # sticks are positive, so exp(w_max/tau) > 1 = remainder/delta always:
    # no truncated draw falls back to the tail bucket
    params = _params(tf.SB_SOFTMAX_PP, tau=0.5, rho=0.99)
    pmf = inf.recover_pmf_truncated(params, 4000, np.random.default_rng(17))
    assert pmf.tail_mass == 0.0


def test_recover_matches_streamed_singles():
    params = _params(
        tf.SB_SOFTMAX_PP, tau=0.2, rho=0.99, mu=(1.0, 0.3), sigma=(0.8, 0.8)
    )
    n = 4000
    from igr import recovery as rec

    counts = {}
    for i in range(n):
        out = inf.sample_truncated(params, np.random.default_rng(20_000 + i))
        cat = rec.discretize(out.trace.z.coords, params.spec.delta)
        counts[cat] = counts.get(cat, 0) + 1
    single = np.zeros(max(counts) + 1)
    for cat, c in counts.items():
        single[cat] = c / n
    pmf = inf.recover_pmf_truncated(params, n, np.random.default_rng(18))
    width = min(single.size, pmf.probs.size)
    se = np.sqrt(0.25 / n)
    np.testing.assert_allclose(pmf.probs[:width], single[:width], atol=5 * se)


def test_recover_identity_chain_reports_tail():
    # sb-identity draws can discretize to the remainder: with every stick
    # below 0.05 and stopping remainder above it, the tail bucket wins
    params = _params(tf.SB_IDENTITY, rho=0.9, mu=(-3.0,), sigma=(0.1,))
    params.materialize(200)
    params.mu[:] = -3.0
    params.sigma[:] = 0.1
    pmf = inf.recover_pmf_truncated(params, 2000, np.random.default_rng(19))
    assert pmf.tail_mass > 0.5
